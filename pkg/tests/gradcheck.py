"""Central finite-difference oracle for the fine detector."""

import numpy as np

from gfdmim.neural import FineDetectorParams, HyperParams, init_params

STEP = 1e-5
# components smaller than this are compared in absolute terms
FLOOR = 1e-6


def reference_loss(arrays, blocks, bits):
    a_re, a_im, c, w1, b1, w2, b2 = arrays
    x = np.stack([blocks.real, blocks.imag], axis=-1)                # (B, u, 2)
    kern = np.stack([a_re, a_im], axis=0)                             # (2, T)
    conv = np.tanh(np.einsum("bgk,kt->bgt", x, kern) + c)
    hidden = np.tanh(np.einsum("hf,bf->bh", w1, conv.reshape(len(x), -1)) + b1)
    out = 1.0 / (1.0 + np.exp(-(np.einsum("oh,bh->bo", w2, hidden) + b2)))
    return np.mean(np.linalg.norm(bits - out, axis=1))


def finite_difference(params: FineDetectorParams, blocks, bits):
    arrays = [a.copy() for a in params.arrays()]
    grads = []
    for a in arrays:
        g = np.empty_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + STEP
            up = reference_loss(arrays, blocks, bits)
            flat[i] = orig - STEP
            down = reference_loss(arrays, blocks, bits)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * STEP)
        grads.append(g)
    return grads


def _layers(arrays, blocks):
    a_re, a_im, c, w1, b1, w2, b2 = arrays
    x = np.stack([blocks.real, blocks.imag], axis=-1)
    conv = np.tanh(np.einsum("bgk,kt->bgt", x, np.stack([a_re, a_im])) + c)
    flat = conv.reshape(len(x), -1)
    return flat, flat @ w1.T + b1


def _output_loss(hidden, w2, b2, bits):
    # hidden (..., B, tau) -> mean over B of ||bits - sigmoid(w2 h + b2)||
    out = 1.0 / (1.0 + np.exp(-(hidden @ np.swapaxes(w2, -1, -2) + b2[..., None, :])))
    return np.mean(np.linalg.norm(bits - out, axis=-1), axis=-1)


def finite_difference_fast(params: FineDetectorParams, blocks, bits):
    """Same estimate as ``finite_difference`` for full-size networks.

    A dense-layer entry ``w1[h, f]`` or ``b1[h]`` only moves hidden unit
    ``h``, so each perturbed loss is evaluated by replacing that one
    hidden column and re-running the output layer; nothing downstream is
    approximated. Filter and output-layer entries use the full forward.
    """
    arrays = [a.copy() for a in params.arrays()]
    a_re, a_im, c, w1, b1, w2, b2 = arrays
    grads = [np.empty_like(a) for a in arrays]
    # filters: few entries, full reference forward each time
    for a, g in zip(arrays[:3], grads[:3]):
        for i in range(a.size):
            orig = a[i]
            a[i] = orig + STEP
            up = reference_loss(arrays, blocks, bits)
            a[i] = orig - STEP
            down = reference_loss(arrays, blocks, bits)
            a[i] = orig
            g[i] = (up - down) / (2 * STEP)
    flat, z = _layers(arrays, blocks)          # (B, uT), (B, tau)
    hidden = np.tanh(z)
    for h in range(len(b1)):
        # column h of hidden under w1[h, :] +/- STEP (one row per f), then b1[h] +/- STEP
        shifts = np.concatenate([flat.T, np.ones((1, len(blocks)))]) * STEP   # (uT+1, B)
        out = []
        for sign in (1, -1):
            stack = np.broadcast_to(hidden, (len(shifts),) + hidden.shape).copy()
            stack[:, :, h] = np.tanh(z[:, h] + sign * shifts)
            out.append(_output_loss(stack, w2, b2, bits))
        diff = (out[0] - out[1]) / (2 * STEP)
        grads[3][h], grads[4][h] = diff[:-1], diff[-1]
    for which in (5, 6):
        a = arrays[which]
        P = a.size
        pert = np.repeat(a.reshape(1, -1), 2 * P, axis=0)
        pert[np.arange(P), np.arange(P)] += STEP
        pert[P + np.arange(P), np.arange(P)] -= STEP
        pert = pert.reshape((2 * P,) + a.shape)
        w, b = (pert, np.broadcast_to(b2, (2 * P,) + b2.shape)) if which == 5 else \
               (np.broadcast_to(w2, (2 * P,) + w2.shape), pert)
        vals = _output_loss(np.broadcast_to(hidden, (2 * P,) + hidden.shape), w, b, bits)
        grads[which] = ((vals[:P] - vals[P:]) / (2 * STEP)).reshape(a.shape)
    return grads


def max_relative_error(analytic, numeric) -> float:
    worst = 0.0
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), FLOOR)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def random_problem(rng, u, hyper: HyperParams, p, batch=3):
    params = init_params(u, hyper, p, rng)
    # widen the draw so tanh units are not all in their linear region
    for a in params.arrays():
        a *= rng.uniform(1.0, 3.0)
    blocks = rng.normal(size=(batch, u)) + 1j * rng.normal(size=(batch, u))
    bits = rng.integers(0, 2, size=(batch, p)).astype(float)
    return params, blocks, bits

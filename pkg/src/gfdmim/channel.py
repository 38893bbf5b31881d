"""Block-fading multipath channel with AWGN.

Taps are redrawn per GFDM symbol and applied as an N x N circulant
matrix, which is what remains of the linear channel once a cyclic prefix
at least as long as the channel has been stripped.
"""

from __future__ import annotations

import numpy as np

# 3GPP Extended Pedestrian A: excess delay (ns) and relative power (dB)
EPA_DELAYS_NS = (0, 30, 70, 90, 110, 190, 410)
EPA_POWERS_DB = (0.0, -1.0, -3.0, -2.0, -8.0, -17.2, -20.8)

PROFILES = ("uniform", "epa")


def tap_powers(profile: str, n_ch: int) -> np.ndarray:
    """Per-tap mean power. EPA is mapped onto 7 consecutive sample-spaced
    taps and normalised to unit total power."""
    if profile == "uniform":
        return np.ones(n_ch)
    if profile == "epa":
        if n_ch != len(EPA_POWERS_DB):
            raise ValueError(f"EPA profile has {len(EPA_POWERS_DB)} taps, config asks for {n_ch}")
        p = 10.0 ** (np.asarray(EPA_POWERS_DB) / 10.0)
        return p / p.sum()
    raise ValueError(f"unknown channel profile {profile!r}; expected one of {PROFILES}")


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """Samples of CN(0, 1)."""
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def draw_channel(profile: str, n_ch: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Rayleigh taps of shape ``(n_ch,)`` or ``(size, n_ch)``."""
    if n_ch < 1:
        raise ValueError("need at least one channel tap")
    powers = tap_powers(profile, n_ch)
    shape = (n_ch,) if size is None else (size, n_ch)
    return crandn(rng, shape) * np.sqrt(powers)


def circulant(h: np.ndarray, N: int) -> np.ndarray:
    """Circulant convolution matrix with first column ``[h, 0, ..., 0]``.

    Accepts a batch of tap vectors on the leading axes.
    """
    h = np.asarray(h)
    if h.shape[-1] > N:
        raise ValueError(f"{h.shape[-1]} taps do not fit in N={N}")
    col = np.zeros(h.shape[:-1] + (N,), dtype=complex)
    col[..., : h.shape[-1]] = h
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return col[..., idx]


def apply_channel(x: np.ndarray, h: np.ndarray, sigma_w2: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """``y = H x + n`` with ``n ~ CN(0, sigma_w2 I)``."""
    x = np.asarray(x)
    h = np.asarray(h)
    if h.shape[-1] > x.shape[-1]:
        raise ValueError(f"{h.shape[-1]} taps do not fit in N={x.shape[-1]}")
    # circulant matvec restricted to the n_ch nonzero diagonals
    y = sum(h[..., k, None] * np.roll(x, k, axis=-1) for k in range(h.shape[-1]))
    if sigma_w2 > 0:
        if rng is None:
            raise ValueError("noise requested without a random generator")
        y = y + np.sqrt(sigma_w2) * crandn(rng, y.shape)
    return y


def linear_channel_via_cp(x: np.ndarray, h: np.ndarray, n_cp: int) -> np.ndarray:
    """Noiseless reference path: add CP, linear convolution, strip CP."""
    from .modem import add_cp, remove_cp

    x = np.asarray(x)
    h = np.asarray(h)
    if n_cp < len(h) - 1:
        raise ValueError("cyclic prefix shorter than channel memory")
    tx = add_cp(x, n_cp)
    rx = np.convolve(tx, h)[: len(tx)]
    return remove_cp(rx, n_cp)


def equivalent_channel(H: np.ndarray, A: np.ndarray) -> np.ndarray:
    return H @ A


def signal_power(A: np.ndarray, activity) -> float:
    """Mean transmit power per sample, ``E||A d||^2 / N``.

    Data entries are zero-mean, mutually uncorrelated and unit-energy when
    active, so ``E[d d^H] = diag(activity)`` with ``activity`` the
    probability that each entry is on (scalar or length N).
    """
    N = A.shape[0]
    activity = np.broadcast_to(np.asarray(activity, dtype=float), (A.shape[1],))
    return float(np.sum(np.abs(A) ** 2 * activity[None, :]) / N)


def snr_to_sigma(snr_db: float, signal_power: float = 1.0) -> float:
    if signal_power <= 0:
        raise ValueError("signal power must be positive")
    return signal_power / 10.0 ** (snr_db / 10.0)

"""Convolutional fine detector for ZF-equalised IM blocks.

Each block of ``u`` complex values goes through

* a conv stage of ``T`` filters, each a pair of real weights applied to
  the (real, imag) pair at every position, plus a bias and ``tanh``;
* flattening to ``u*T`` features, position-major then filter;
* a ``tanh`` dense layer of width ``tau`` and a sigmoid output of ``p``
  bit probabilities.

Gradients are derived by hand; there is no autodiff dependency.
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# kernel filters T and hidden width tau per constellation size
TABLE_HYPERPARAMS = {2: (16, 64), 4: (32, 128), 16: (64, 256)}


@dataclass(frozen=True)
class HyperParams:
    T: int
    tau: int

    @classmethod
    def for_q(cls, Q: int) -> "HyperParams":
        try:
            return cls(*TABLE_HYPERPARAMS[Q])
        except KeyError:
            raise ValueError(f"no published hyperparameters for Q={Q}") from None


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 8e-4
    batch_size: int = 1000
    epochs: int = 60
    train_snr_db: float = 15.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "norm"  # "norm" (||s - s_hat||) or "squared"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.loss not in ("norm", "squared"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class FineDetectorParams:
    a_re: np.ndarray  # (T,)
    a_im: np.ndarray  # (T,)
    c: np.ndarray     # (T,)
    w1: np.ndarray    # (tau, u*T)
    b1: np.ndarray    # (tau,)
    w2: np.ndarray    # (p, tau)
    b2: np.ndarray    # (p,)

    @property
    def T(self) -> int:
        return len(self.a_re)

    @property
    def tau(self) -> int:
        return len(self.b1)

    @property
    def p(self) -> int:
        return len(self.b2)

    @property
    def u(self) -> int:
        return self.w1.shape[1] // self.T

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def copy(self) -> "FineDetectorParams":
        return FineDetectorParams(*(a.copy() for a in self.arrays()))

    def check(self) -> None:
        T, tau, p = self.T, self.tau, self.p
        expected = [(T,), (T,), (T,), (tau, self.w1.shape[1]), (tau,), (p, tau), (p,)]
        for f, shape in zip(fields(self), expected):
            if getattr(self, f.name).shape != shape:
                raise ValueError(f"{f.name} has shape {getattr(self, f.name).shape}, expected {shape}")
        if self.w1.shape[1] % T:
            raise ValueError("w1 width is not a multiple of the filter count")
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise ValueError("non-finite parameter")

    @classmethod
    def zeros(cls, u: int, T: int, tau: int, p: int) -> "FineDetectorParams":
        return cls(np.zeros(T), np.zeros(T), np.zeros(T), np.zeros((tau, u * T)),
                   np.zeros(tau), np.zeros((p, tau)), np.zeros(p))


def init_params(u: int, hyper: HyperParams, p: int, rng: np.random.Generator) -> FineDetectorParams:
    """Uniform(-r, r) with r = 1/sqrt(fan_in), weights and biases alike."""
    T, tau = hyper.T, hyper.tau

    def uni(fan_in, shape):
        r = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-r, r, size=shape)

    return FineDetectorParams(
        a_re=uni(2, T), a_im=uni(2, T), c=uni(2, T),
        w1=uni(u * T, (tau, u * T)), b1=uni(u * T, tau),
        w2=uni(tau, (p, tau)), b2=uni(tau, p),
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _forward(blocks: np.ndarray, params: FineDetectorParams):
    re = blocks.real
    im = blocks.imag
    h1 = np.tanh(re[:, :, None] * params.a_re + im[:, :, None] * params.a_im + params.c)
    flat = h1.reshape(len(blocks), -1)
    h2 = np.tanh(flat @ params.w1.T + params.b1)
    out = _sigmoid(h2 @ params.w2.T + params.b2)
    return out, (re, im, h1, flat, h2)


def forward(blocks: np.ndarray, params: FineDetectorParams) -> np.ndarray:
    """Bit probabilities for a block ``(u,)`` or a batch ``(B, u)``."""
    blocks = np.asarray(blocks)
    single = blocks.ndim == 1
    batch = blocks[None] if single else blocks
    if batch.shape[1] != params.u:
        raise ValueError(f"block length {batch.shape[1]} does not match u={params.u}")
    out = _forward(batch, params)[0]
    return out[0] if single else out


def loss(s: np.ndarray, s_hat: np.ndarray, kind: str = "norm") -> float:
    """Mean over the batch of ``||s - s_hat||`` (or its square)."""
    diff = np.atleast_2d(np.asarray(s_hat, dtype=float) - np.asarray(s, dtype=float))
    sq = np.sum(diff**2, axis=1)
    return float(np.mean(sq if kind == "squared" else np.sqrt(sq)))


def backward(blocks: np.ndarray, s: np.ndarray, params: FineDetectorParams,
             kind: str = "norm") -> tuple[float, FineDetectorParams]:
    """Batch-mean loss and its exact gradient with respect to every parameter.

    ``||.||`` is not differentiable at 0; a sample with zero error
    contributes a zero gradient.
    """
    blocks = np.atleast_2d(blocks)
    s = np.atleast_2d(s).astype(float)
    B = len(blocks)
    out, (re, im, h1, flat, h2) = _forward(blocks, params)
    diff = out - s
    sq = np.sum(diff**2, axis=1)
    if kind == "squared":
        value = float(np.mean(sq))
        g_out = 2.0 * diff / B
    else:
        norm = np.sqrt(sq)
        value = float(np.mean(norm))
        safe = np.where(norm > 0, norm, 1.0)
        g_out = np.where(norm[:, None] > 0, diff / safe[:, None], 0.0) / B
    g_z3 = g_out * out * (1.0 - out)
    g_w2 = g_z3.T @ h2
    g_b2 = g_z3.sum(axis=0)
    g_z2 = (g_z3 @ params.w2) * (1.0 - h2**2)
    g_w1 = g_z2.T @ flat
    g_b1 = g_z2.sum(axis=0)
    g_z1 = (g_z2 @ params.w1).reshape(h1.shape) * (1.0 - h1**2)
    g_are = np.einsum("bgt,bg->t", g_z1, re)
    g_aim = np.einsum("bgt,bg->t", g_z1, im)
    g_c = g_z1.sum(axis=(0, 1))
    return value, FineDetectorParams(g_are, g_aim, g_c, g_w1, g_b1, g_w2, g_b2)


class Adam:
    def __init__(self, params: FineDetectorParams, lr=8e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, grads: FineDetectorParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train(blocks: np.ndarray, bits: np.ndarray, config: TrainingConfig, hyper: HyperParams,
          params: FineDetectorParams | None = None, progress=None):
    """Fit the fine detector on (equalised block, true bits) pairs.

    Returns ``(params, history)`` with ``history`` the mean training loss
    of each epoch. Fully determined by ``config.seed``.
    """
    blocks = np.asarray(blocks)
    bits = np.asarray(bits, dtype=float)
    if len(blocks) == 0:
        raise ValueError("empty training set")
    if len(blocks) != len(bits):
        raise ValueError("blocks and bits disagree in length")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(blocks.shape[1], hyper, bits.shape[1], rng)
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    n = len(blocks)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            value, grads = backward(blocks[idx], bits[idx], params, config.loss)
            opt.step(grads)
            total += value * len(idx)
        history.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, history[-1])
        if progress is not None:
            progress(epoch, history[-1])
    return params, history


def detect_bits(s_hat: np.ndarray) -> np.ndarray:
    """Hard bits; a probability of exactly 0.5 maps to 1."""
    return (np.asarray(s_hat) >= 0.5).astype(np.uint8)


# Checkpoint layout (all little-endian):
#   8s   magic  b"GFDMIMNN"
#   u32  version
#   u32  u, v, Q, T, tau, p
#   f64  a_re[T], a_im[T], c[T], w1[tau*u*T] (row-major), b1[tau], w2[p*tau], b2[p]
#   u32  CRC-32 of every preceding byte
MAGIC = b"GFDMIMNN"
VERSION = 1
_HEADER = struct.Struct("<8s7I")


class CheckpointError(ValueError):
    pass


def dumps_params(params: FineDetectorParams, v: int, Q: int) -> bytes:
    params.check()
    head = _HEADER.pack(MAGIC, VERSION, params.u, v, Q, params.T, params.tau, params.p)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    payload = head + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def loads_params(data: bytes) -> tuple[FineDetectorParams, dict]:
    if len(data) < _HEADER.size + 4:
        raise CheckpointError("checkpoint truncated")
    magic, version, u, v, Q, T, tau, p = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a fine-detector checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    sizes = [T, T, T, tau * u * T, tau, p * tau, p]
    expected = _HEADER.size + 8 * sum(sizes) + 4
    if len(data) != expected:
        raise CheckpointError(f"checkpoint is {len(data)} bytes, header implies {expected}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    flat = np.frombuffer(data, dtype="<f8", count=sum(sizes), offset=_HEADER.size).astype(float)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    shapes = [(T,), (T,), (T,), (tau, u * T), (tau,), (p, tau), (p,)]
    params = FineDetectorParams(*(a.reshape(s).copy() for a, s in zip(parts, shapes)))
    header = dict(u=u, v=v, Q=Q, T=T, tau=tau, p=p)
    return params, header


def save_params(path, params: FineDetectorParams, v: int, Q: int) -> None:
    Path(path).write_bytes(dumps_params(params, v, Q))


def load_params(path, expect: dict | None = None) -> tuple[FineDetectorParams, dict]:
    """Read a checkpoint; ``expect`` entries must match the stored header."""
    params, header = loads_params(Path(path).read_bytes())
    for key, value in (expect or {}).items():
        if header[key] != value:
            raise CheckpointError(f"checkpoint {key}={header[key]} does not match expected {value}")
    return params, header

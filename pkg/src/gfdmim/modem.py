"""GFDM transmitter: RC prototype filter, modulation matrix, cyclic prefix."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .config import SystemConfig


def rc_impulse(t: np.ndarray, K: int, rolloff: float) -> np.ndarray:
    """Raised-cosine impulse response with symbol period ``K`` samples.

    The removable singularity at ``|t| = K / (2 a)`` is replaced by its
    limit ``pi/4 * sinc(1 / (2 a))``.
    """
    t = np.asarray(t, dtype=float)
    x = 2.0 * rolloff * t / K
    singular = np.isclose(np.abs(x), 1.0, rtol=0, atol=1e-12)
    denom = np.where(singular, 1.0, 1.0 - x**2)
    r = np.sinc(t / K) * np.cos(np.pi * rolloff * t / K) / denom
    if rolloff > 0:
        r = np.where(singular, np.pi / 4 * np.sinc(1.0 / (2.0 * rolloff)), r)
    return r


def rc_prototype(K: int, M: int, rolloff: float) -> np.ndarray:
    """Unit-energy length-KM RC prototype, circularly centred on sample 0."""
    N = K * M
    half = N // 2
    t = (np.arange(N) + half) % N - half
    g = rc_impulse(t, K, rolloff)
    return g / np.linalg.norm(g)


def build_prototype(config: SystemConfig) -> np.ndarray:
    return rc_prototype(config.K, config.M, config.rolloff)


def rectangular_prototype(N: int) -> np.ndarray:
    return np.full(N, 1.0 / np.sqrt(N))


def build_modulation_matrix(g: np.ndarray, K: int, M: int) -> np.ndarray:
    """Dense N x N GFDM matrix; column ``m*K + k`` is g shifted by ``m*K`` and
    modulated to subcarrier ``k``."""
    N = K * M
    g = np.asarray(g)
    if g.shape != (N,):
        raise ValueError(f"prototype length {g.shape} does not match N={N}")
    n = np.arange(N)
    k = np.arange(K)
    m = np.arange(M)
    shifted = g[(n[:, None] - m[None, :] * K) % N]             # (N, M)
    carrier = np.exp(2j * np.pi * np.outer(n, k) / K)          # (N, K)
    A = shifted[:, :, None] * carrier[:, None, :]              # (N, M, K)
    return A.reshape(N, N)


@lru_cache(maxsize=32)
def _cached_matrix(K, M, rolloff, pulse):
    g = rc_prototype(K, M, rolloff) if pulse == "rc" else rectangular_prototype(K * M)
    A = build_modulation_matrix(g, K, M)
    A.setflags(write=False)
    return A


def modulation_matrix(config: SystemConfig, pulse: str = "rc") -> np.ndarray:
    """Cached read-only modulation matrix for ``config``."""
    if pulse not in ("rc", "rect"):
        raise ValueError(f"unknown pulse {pulse!r}")
    return _cached_matrix(config.K, config.M, float(config.rolloff), pulse)


def modulate(d: np.ndarray, A: np.ndarray) -> np.ndarray:
    d = np.asarray(d)
    if d.shape[-1] != A.shape[1]:
        raise ValueError(f"data length {d.shape[-1]} does not match N={A.shape[1]}")
    return d @ A.T


def add_cp(x: np.ndarray, n_cp: int) -> np.ndarray:
    x = np.asarray(x)
    if n_cp > x.shape[-1]:
        raise ValueError(f"cyclic prefix {n_cp} longer than symbol {x.shape[-1]}")
    if n_cp == 0:
        return x.copy()
    return np.concatenate([x[..., -n_cp:], x], axis=-1)


def remove_cp(x_cp: np.ndarray, n_cp: int) -> np.ndarray:
    x_cp = np.asarray(x_cp)
    if n_cp > x_cp.shape[-1] - n_cp:
        raise ValueError(f"cyclic prefix {n_cp} longer than symbol")
    return x_cp[..., n_cp:].copy()


def save_matrix(path, M: np.ndarray) -> None:
    """Dump a real or complex matrix as text (real and imaginary columns)."""
    M = np.atleast_2d(np.asarray(M))
    if np.iscomplexobj(M):
        out = np.empty((M.shape[0], 2 * M.shape[1]))
        out[:, 0::2], out[:, 1::2] = M.real, M.imag
        np.savetxt(path, out, fmt="%.17e", header="interleaved real imag")
    else:
        np.savetxt(path, M, fmt="%.17e")

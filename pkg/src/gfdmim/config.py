"""System dimensioning for GFDM with index modulation.

A :class:`SystemConfig` carries the user-facing parameters; everything else
(number of samples, IM blocks per subsymbol, bits per block) is derived
by :func:`derive` and cached on the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

SUPPORTED_Q = (2, 4, 16)


class ConfigError(ValueError):
    """Raised for inconsistent or unsupported system parameters."""


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _pam_levels(bits_per_axis: int) -> np.ndarray:
    """Gray-labelled PAM levels indexed by label, bit 0 on the positive side."""
    n = 1 << bits_per_axis
    # position 0 is the most positive amplitude
    amplitudes = (n - 1) - 2 * np.arange(n)
    levels = np.empty(n)
    for pos in range(n):
        levels[_gray(pos)] = amplitudes[pos]
    return levels.astype(float)


def build_constellation(Q: int) -> np.ndarray:
    """Unit-energy Gray-labelled square QAM (BPSK for ``Q=2``).

    Entry ``i`` is the point whose label, read most-significant bit first,
    is the binary expansion of ``i``. For square QAM the first half of the
    label drives the in-phase axis and the second half the quadrature axis.
    """
    if Q not in SUPPORTED_Q:
        raise ConfigError(f"unsupported constellation size Q={Q}; expected one of {SUPPORTED_Q}")
    if Q == 2:
        return np.array([1.0 + 0j, -1.0 + 0j])
    bits = int(math.log2(Q))
    half = bits // 2
    levels = _pam_levels(half)
    idx = np.arange(Q)
    points = levels[idx >> half] + 1j * levels[idx & ((1 << half) - 1)]
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


@dataclass(frozen=True)
class DerivedDims:
    N: int
    L: int
    p_i: int
    p_q: int
    p: int
    alpha: int

    @property
    def bits_per_subsymbol(self) -> int:
        return self.p * self.L


@dataclass(frozen=True)
class SystemConfig:
    """Dimensioning of one GFDM-IM link.

    ``n_cp`` defaults to ``n_ch``, the shortest prefix that keeps the
    channel circular after CP removal.
    """

    K: int = 8
    M: int = 1
    u: int = 4
    v: int = 2
    Q: int = 2
    rolloff: float = 0.5
    n_cp: int | None = None
    n_ch: int = 7
    constellation: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n_cp is None:
            object.__setattr__(self, "n_cp", self.n_ch)
        if self.constellation is None:
            object.__setattr__(self, "constellation", build_constellation(self.Q))
        self._validate()
        self.constellation.setflags(write=False)

    def _validate(self):
        for name in ("K", "M", "u", "Q", "n_ch"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.K % self.u:
            raise ConfigError(f"u={self.u} does not divide K={self.K}")
        if not 1 <= self.v < self.u:
            raise ConfigError(f"need 1 <= v < u, got v={self.v}, u={self.u}")
        if self.Q & (self.Q - 1):
            raise ConfigError(f"Q={self.Q} is not a power of two")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError(f"roll-off {self.rolloff} outside [0, 1]")
        if self.n_cp < self.n_ch:
            raise ConfigError(f"cyclic prefix ({self.n_cp}) shorter than channel ({self.n_ch} taps)")
        if self.n_cp > self.K * self.M:
            raise ConfigError(f"cyclic prefix ({self.n_cp}) longer than the symbol")
        c = np.asarray(self.constellation)
        if c.shape != (self.Q,):
            raise ConfigError(f"constellation must have {self.Q} points")
        if abs(np.mean(np.abs(c) ** 2) - 1.0) > 1e-12:
            raise ConfigError("constellation must have unit mean energy")
        if math.comb(self.u, self.v) < 2:
            raise ConfigError("index pattern set carries no bits")

    @cached_property
    def dims(self) -> DerivedDims:
        return derive(self)

    @property
    def bits_per_symbol(self) -> int:
        """Bits carried by one GFDM symbol (all M subsymbols)."""
        return self.dims.bits_per_subsymbol * self.M

    def with_(self, **changes) -> "SystemConfig":
        if "Q" in changes and "constellation" not in changes:
            changes["constellation"] = None
        if "n_ch" in changes and "n_cp" not in changes:
            changes["n_cp"] = None
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "constellation"}


def derive(config: SystemConfig) -> DerivedDims:
    """Bit budget and dimensions implied by ``config``."""
    K, M, u, v, Q = config.K, config.M, config.u, config.v, config.Q
    if K % u:
        raise ConfigError(f"u={u} does not divide K={K}")
    if v >= u:
        raise ConfigError(f"v={v} must be smaller than u={u}")
    if Q & (Q - 1):
        raise ConfigError(f"Q={Q} is not a power of two")
    p_i = int(math.floor(math.log2(math.comb(u, v))))
    p_q = v * int(math.log2(Q))
    return DerivedDims(N=K * M, L=K // u, p_i=p_i, p_q=p_q, p=p_i + p_q, alpha=2**p_i)


_INT_KEYS = {"K", "M", "u", "v", "Q", "n_cp", "n_ch", "ncp", "nch"}
_ALIASES = {"ncp": "n_cp", "nch": "n_ch", "a": "rolloff"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        try:
            parsed = int(value) if key in _INT_KEYS else value
            if key in ("rolloff", "a"):
                parsed = float(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
        out[_ALIASES.get(key, key)] = parsed
    return out


def load_config(path: str | Path | None = None, **overrides) -> SystemConfig:
    """Build a config from an optional key-value file plus overrides.

    ``None`` overrides are ignored, so CLI flags can be passed straight in.
    """
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(SystemConfig)} - {"constellation"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return SystemConfig(**values)

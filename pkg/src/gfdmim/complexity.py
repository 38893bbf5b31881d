"""Complex-multiplication (CM) counts for the ZF, ML and DeepConvIM detectors.

ZF and ML counts are exact integers. The neural terms are real
multiplications divided by three (one CM costs three real
multiplications), so DeepConvIM counts are returned as ``Fraction``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from .config import SystemConfig
from .neural import HyperParams

# Published totals, keyed by (Q, K, M): (ZF, DeepConvIM, ML)
PUBLISHED_TOTALS = {
    (2, 32, 1): (1.07e5, 1.18e5, 2.33e12),
    (4, 32, 1): (1.09e5, 1.56e5, 1.48e22),
    (16, 32, 1): (2.37e5, 4.20e5, 4.15e36),
    (2, 8, 1): (2.08e3, 5.15e3, 1.07e4),
    (2, 8, 3): (4.61e4, 5.54e4, 5.23e9),
}

FORMULAS = ("table1", "table2")


@dataclass(frozen=True)
class ComplexityConfig:
    N: int
    M: int
    L: int
    u: int
    v: int
    Q: int
    alpha: int
    p: int
    n_ch: int
    T: int = 0
    tau: int = 0
    lam: Fraction = Fraction(6)
    delta: Fraction = Fraction(6)

    def __post_init__(self):
        if self.lam < 0 or self.delta < 0:
            raise ValueError("tanh/sigmoid costs must be non-negative")

    @classmethod
    def from_system(cls, config: SystemConfig, hyper: HyperParams | None = None,
                    lam=6, delta=6) -> "ComplexityConfig":
        d = config.dims
        hyper = hyper or HyperParams.for_q(config.Q)
        return cls(N=d.N, M=config.M, L=d.L, u=config.u, v=config.v, Q=config.Q,
                   alpha=d.alpha, p=d.p, n_ch=config.n_ch, T=hyper.T, tau=hyper.tau,
                   lam=Fraction(lam), delta=Fraction(delta))


def _front_end(c: ComplexityConfig) -> int:
    # forming Ht (N_ch N^2) plus the ZF solve (3N^3 + N^2)
    return 3 * c.N**3 + c.N**2 * (1 + c.n_ch)


def zf_cm(c: ComplexityConfig, formula: str = "table2") -> int:
    """ZF total. ``table1`` keeps the factor ``u`` in the per-block decision
    cost (``u alpha Q^v ML``); ``table2`` drops it, as the summary does."""
    if formula not in FORMULAS:
        raise ValueError(f"formula must be one of {FORMULAS}")
    per_block = c.alpha * c.Q**c.v * (c.u if formula == "table1" else 1)
    return _front_end(c) + per_block * c.M * c.L


def ml_cm(c: ComplexityConfig) -> int:
    ML = c.M * c.L
    return (c.alpha * c.Q**c.v) ** ML * (c.N * c.v * ML + c.N) + c.n_ch * c.N**2


def cnn_cm(c: ComplexityConfig) -> Fraction:
    return Fraction(c.u * c.T) * (2 + c.lam) * (c.M * c.L) / 3


def fcnn_cm(c: ComplexityConfig) -> Fraction:
    real = c.u * c.T * c.tau + c.tau * c.lam + c.tau * c.p + c.p * c.delta
    return Fraction(real) * (c.M * c.L) / 3


def deepconv_cm(c: ComplexityConfig) -> Fraction:
    return _front_end(c) + cnn_cm(c) + fcnn_cm(c)


def published_configs() -> list[SystemConfig]:
    return [SystemConfig(K=K, M=M, u=4, v=2, Q=Q, rolloff=0.5, n_ch=7)
            for (Q, K, M) in PUBLISHED_TOTALS]


def totals(config: SystemConfig, lam=6, delta=6, formula: str = "table2",
           hyper: HyperParams | None = None) -> dict:
    c = ComplexityConfig.from_system(config, hyper, lam, delta)
    return {"zf": zf_cm(c, formula), "deepconv": deepconv_cm(c), "ml": ml_cm(c)}


def _label(config: SystemConfig) -> str:
    mod = "BPSK" if config.Q == 2 else f"{config.Q}-QAM"
    return f"{mod}, K={config.K}, M={config.M}"


def table_rows(configs=None, lam=6, delta=6, formula: str = "table2") -> list[dict]:
    rows = []
    for cfg in configs or published_configs():
        t = totals(cfg, lam, delta, formula)
        ref = PUBLISHED_TOTALS.get((cfg.Q, cfg.K, cfg.M))
        rows.append({"configuration": _label(cfg), "Q": cfg.Q, "K": cfg.K, "M": cfg.M,
                     **t, "reference": ref})
    return rows


def relative_error(value, reference: float) -> float:
    return abs(float(value) - reference) / reference


def best_lambda_delta(candidates=range(2, 11), configs=None) -> tuple[int, float]:
    """``lambda = delta`` value minimising the worst DeepConvIM error
    against the published totals. Returns ``(value, worst_error)``."""
    configs = configs or published_configs()
    best = None
    for lam in candidates:
        worst = max(relative_error(deepconv_cm(ComplexityConfig.from_system(c, lam=lam, delta=lam)),
                                   PUBLISHED_TOTALS[(c.Q, c.K, c.M)][1]) for c in configs)
        if best is None or worst < best[1]:
            best = (lam, worst)
    return best


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["configuration", "ZF", "DeepConvIM", "ML", "ZF_ref", "DeepConvIM_ref", "ML_ref"])
    for r in rows:
        ref = r["reference"] or ("", "", "")
        w.writerow([r["configuration"], f"{float(r['zf']):.6g}", f"{float(r['deepconv']):.6g}",
                    f"{float(r['ml']):.6g}", *(f"{x:.3g}" if x != "" else "" for x in ref)])
    return buf.getvalue()

"""Figures written next to the CSV reports (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "zf": dict(marker="o", color="tab:blue", label="ZF"),
    "deepconv": dict(marker="s", color="tab:red", label="DeepConvIM"),
    "ml": dict(marker="^", color="tab:green", label="ML"),
}

# fixed metadata so repeated runs write identical files
_PNG_META = {"Software": None}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_ber(records, path, title: str | None = None) -> None:
    """Semilog BER-vs-SNR curves, one per detector."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    detectors = list(dict.fromkeys(r.detector for r in records))
    for det in detectors:
        pts = sorted((r.snr_db, r.ber) for r in records if r.detector == det and r.bit_errors > 0)
        if not pts:
            continue
        snr, ber = zip(*pts)
        ax.semilogy(snr, ber, **STYLE.get(det, dict(label=det)))
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    if detectors:
        ax.legend()
    if title:
        ax.set_title(title)
    _finish(fig, path)


def plot_loss(history, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(range(1, len(history) + 1), history, color="k")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def plot_complexity(rows, path) -> None:
    """Log-scale CM counts per configuration."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    labels = [r["configuration"] for r in rows]
    width = 0.27
    for i, det in enumerate(("zf", "deepconv", "ml")):
        xs = [j + (i - 1) * width for j in range(len(rows))]
        ax.bar(xs, [float(r[det]) for r in rows], width, color=STYLE[det]["color"],
               label=STYLE[det]["label"])
    ax.set_yscale("log")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("complex multiplications")
    ax.legend()
    _finish(fig, path)

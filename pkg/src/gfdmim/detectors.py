"""Zero-forcing and maximum-likelihood detectors.

Batched entry points take ``Ht`` of shape ``(n, N, N)`` and received
vectors ``y`` of shape ``(n, S, N)`` (``S`` received vectors per channel,
e.g. one per SNR point) and return candidate indices per IM block; the
index of a block equals the integer value of its bit message.
"""

from __future__ import annotations

import numpy as np

from .imcodec import PatternTable, candidate_blocks, int_to_bits, nearest_index, split_symbol

RCOND_MIN = 1e-12
ML_CAP = 2**24


class IllConditionedChannel(ValueError):
    pass


class InfeasibleSearch(ValueError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"ML search over {count} candidates exceeds the cap of {cap}")
        self.count = count
        self.cap = cap


def rcond(Ht: np.ndarray) -> np.ndarray:
    """Reciprocal 2-norm condition number (0 for singular matrices)."""
    s = np.linalg.svd(Ht, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = s[..., -1] / s[..., 0]
    return np.nan_to_num(r, nan=0.0)


def zf_coarse(y: np.ndarray, Ht: np.ndarray, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Least-squares estimate of ``d`` from ``y = Ht d + n``.

    Square channels are solved by LU; tall ones by ``lstsq``. Raises
    :class:`IllConditionedChannel` when the reciprocal condition number
    falls below ``rcond_min``.
    """
    Ht = np.asarray(Ht)
    if rcond(Ht) < rcond_min:
        raise IllConditionedChannel("equivalent channel is numerically singular")
    if Ht.shape[0] == Ht.shape[1]:
        return np.linalg.solve(Ht, y)
    return np.linalg.lstsq(Ht, y, rcond=None)[0]


def zf_coarse_batch(y: np.ndarray, Ht: np.ndarray, rcond_min: float = RCOND_MIN):
    """Batched :func:`zf_coarse`.

    Returns ``(d_hat, ok)`` where ``d_hat`` has the shape of ``y`` and
    ``ok`` flags channels that passed the conditioning check; failed rows
    of ``d_hat`` are left as NaN.
    """
    ok = rcond(Ht) >= rcond_min
    d_hat = np.full(y.shape, np.nan, dtype=complex)
    if ok.any():
        # one LU per channel, all received vectors as right-hand sides
        d_hat[ok] = np.swapaxes(np.linalg.solve(Ht[ok], np.swapaxes(y[ok], -1, -2)), -1, -2)
    return d_hat, ok


def zf_decide(d_hat: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Per-block nearest candidate index for an equalised data vector."""
    u = candidates.shape[1]
    return nearest_index(split_symbol(d_hat, u), candidates)


def zf_detect(y, Ht, table: PatternTable, constellation: np.ndarray) -> np.ndarray:
    """ZF equalisation followed by a joint per-block decision; returns bits."""
    cands = candidate_blocks(table, constellation)
    idx = zf_decide(zf_coarse(y, Ht), cands)
    return int_to_bits(idx, _bits_per_block(cands)).reshape(-1)


def _bits_per_block(candidates: np.ndarray) -> int:
    return int(len(candidates)).bit_length() - 1


def ml_count(n_candidates: int, n_blocks: int) -> int:
    return n_candidates**n_blocks


def _group_sums(contrib: list[np.ndarray], n: int, N: int) -> np.ndarray:
    """All sums picking one column from each block's contribution matrix,
    earlier blocks most significant. Returns ``(n, N, prod c)``."""
    if not contrib:
        return np.zeros((n, N, 1), dtype=complex)
    S = contrib[0]
    for C in contrib[1:]:
        S = (S[:, :, :, None] + C[:, :, None, :]).reshape(n, N, -1)
    return S


def ml_search(y: np.ndarray, Ht: np.ndarray, candidates: np.ndarray, cap: int = ML_CAP,
              budget: int = 2**22) -> np.ndarray:
    """Exhaustive joint ML search over every legal GFDM-IM symbol.

    Minimises ``||y - Ht d||^2``. The blocks are split into two groups and
    the metric of every pair of partial symbols is expanded as

        ||S1||^2 + ||S2||^2 + 2 Re(S1^H S2) - 2 Re(y^H S1) - 2 Re(y^H S2)

    (dropping the constant ``||y||^2``), so all candidates are scored with
    matrix products. Ties resolve to the first candidate in block-major,
    pattern-outer, QAM-inner order.

    ``y``: ``(n, S, N)``; ``Ht``: ``(n, N, N)``. Returns ``(n, S, L*M)``.
    """
    n, S, N = y.shape
    c, u = candidates.shape
    n_blocks = Ht.shape[-1] // u
    total = ml_count(c, n_blocks)
    if total > cap:
        raise InfeasibleSearch(total, cap)
    first = (n_blocks + 1) // 2
    c1, c2 = c**first, c ** (n_blocks - first)
    out = np.empty((n, S, n_blocks), dtype=np.int64)
    step = max(1, budget // (c1 * c2))
    cT = candidates.T
    digits = c ** np.arange(n_blocks - 1, -1, -1, dtype=np.int64)
    for lo in range(0, n, step):
        H = Ht[lo:lo + step]
        m = len(H)
        contrib = [H[:, :, b * u:(b + 1) * u] @ cT for b in range(n_blocks)]
        S1 = _group_sums(contrib[:first], m, N)
        S2 = _group_sums(contrib[first:], m, N)
        cross = 2.0 * np.real(np.conj(np.swapaxes(S1, 1, 2)) @ S2)
        norm1 = np.sum(np.abs(S1) ** 2, axis=1)
        norm2 = np.sum(np.abs(S2) ** 2, axis=1)
        yc = np.conj(y[lo:lo + step])
        proj1 = 2.0 * np.real(yc @ S1)
        proj2 = 2.0 * np.real(yc @ S2)
        for s in range(S):
            metric = cross + (norm1 - proj1[:, s])[:, :, None] + (norm2 - proj2[:, s])[:, None, :]
            flat = metric.reshape(m, -1).argmin(axis=1)
            out[lo:lo + step, s] = (flat[:, None] // digits[None, :]) % c
    return out


def ml_detect(y, Ht, table: PatternTable, constellation: np.ndarray, cap: int = ML_CAP) -> np.ndarray:
    """Single-symbol ML detection; returns ``p * L * M`` bits."""
    cands = candidate_blocks(table, constellation)
    y = np.asarray(y)
    idx = ml_search(y[None, None, :], np.asarray(Ht)[None], cands, cap=cap)[0, 0]
    return int_to_bits(idx, _bits_per_block(cands)).reshape(-1)

"""Index-modulation block mapping.

A p-bit block message is laid out as ``p_i`` index bits followed by
``p_q`` QAM bits, all most-significant first. The index bits select an
active pattern from :class:`PatternTable`; the QAM bits are consumed
``log2(Q)`` at a time and placed on the active positions in ascending
order.

Because of that layout the integer value of a block message is also its
position in the candidate enumeration (pattern outer, QAM inner), which
is what :func:`candidate_blocks` returns and what the detectors index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

# Look-up table for u=4, v=2 used in the published experiments (0-based).
U4V2_TABLE = ((0, 1), (1, 2), (2, 3), (0, 3))


class BlockError(ValueError):
    pass


@dataclass(frozen=True)
class PatternTable:
    u: int
    v: int
    patterns: tuple[tuple[int, ...], ...]

    @property
    def alpha(self) -> int:
        return len(self.patterns)

    @property
    def p_i(self) -> int:
        return self.alpha.bit_length() - 1

    def index_of(self, active: tuple[int, ...]) -> int:
        try:
            return self.patterns.index(tuple(sorted(active)))
        except ValueError:
            raise BlockError(f"active set {active} is not a legal pattern") from None

    def mask(self) -> np.ndarray:
        """Boolean (alpha, u) activity mask."""
        m = np.zeros((self.alpha, self.u), dtype=bool)
        for i, pat in enumerate(self.patterns):
            m[i, list(pat)] = True
        return m

    def dump(self) -> str:
        width = max(self.p_i, 1)
        lines = [f"# u={self.u} v={self.v} alpha={self.alpha} (positions 1-based)"]
        for key, pat in enumerate(self.patterns):
            bits = format(key, f"0{width}b") if self.p_i else "-"
            lines.append(f"{bits}\t{{{', '.join(str(k + 1) for k in pat)}}}")
        return "\n".join(lines) + "\n"


def build_pattern_table(u: int, v: int, p_i: int | None = None) -> PatternTable:
    """First ``2**p_i`` v-subsets of ``range(u)`` in lexicographic order.

    ``(u, v) = (4, 2)`` uses the published look-up table instead, whose
    last row is {1, 4} rather than the lexicographic {1, 3}.
    """
    total = math.comb(u, v)
    if p_i is None:
        p_i = int(math.floor(math.log2(total)))
    alpha = 2**p_i
    if alpha > total:
        raise BlockError(f"2**{p_i} patterns requested but only C({u},{v})={total} exist")
    if (u, v) == (4, 2) and p_i == 2:
        patterns = U4V2_TABLE
    else:
        patterns = tuple(itertools.islice(itertools.combinations(range(u), v), alpha))
    return PatternTable(u, v, patterns)


def table_for(config: SystemConfig) -> PatternTable:
    return build_pattern_table(config.u, config.v, config.dims.p_i)


def bits_to_int(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis (MSB first) into integers."""
    bits = np.asarray(bits)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1, dtype=np.int64)
    return bits.astype(np.int64) @ weights


def int_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def candidate_blocks(table: PatternTable, constellation: np.ndarray) -> np.ndarray:
    """All ``alpha * Q**v`` legal blocks, row ``i`` encoding message ``i``."""
    Q = len(constellation)
    qam = np.array(list(itertools.product(range(Q), repeat=table.v)), dtype=np.int64)
    qam = qam.reshape(-1, table.v)
    out = np.zeros((table.alpha, len(qam), table.u), dtype=complex)
    for k, pat in enumerate(table.patterns):
        out[k][:, list(pat)] = constellation[qam]
    return out.reshape(-1, table.u)


def encode_block(bits, table: PatternTable, constellation: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    bits_per_qam = int(math.log2(len(constellation)))
    p = table.p_i + table.v * bits_per_qam
    if bits.shape != (p,):
        raise BlockError(f"expected {p} bits, got shape {bits.shape}")
    pattern = table.patterns[int(bits_to_int(bits[: table.p_i])) if table.p_i else 0]
    symbols = bits[table.p_i:].reshape(table.v, bits_per_qam)
    block = np.zeros(table.u, dtype=complex)
    block[list(pattern)] = constellation[bits_to_int(symbols)]
    return block


def encode_blocks(bits: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Vectorised encoder: ``(..., p)`` bits to ``(..., u)`` blocks."""
    return candidates[bits_to_int(bits)]


def decode_block_bits(block, table: PatternTable, constellation: np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_block` for a legal block."""
    block = np.asarray(block)
    if block.shape != (table.u,):
        raise BlockError(f"expected block of length {table.u}")
    active = tuple(int(i) for i in np.flatnonzero(block != 0))
    if len(active) != table.v:
        raise BlockError(f"block has {len(active)} nonzero entries, expected {table.v}")
    key = table.index_of(active)
    labels = []
    for value in block[list(active)]:
        hits = np.flatnonzero(np.isclose(constellation, value, rtol=0, atol=1e-9))
        if len(hits) != 1:
            raise BlockError(f"value {value} is not a constellation point")
        labels.append(int(hits[0]))
    bits_per_qam = int(math.log2(len(constellation)))
    index_bits = int_to_bits(key, table.p_i) if table.p_i else np.zeros(0, np.uint8)
    qam_bits = int_to_bits(np.array(labels), bits_per_qam).reshape(-1)
    return np.concatenate([index_bits, qam_bits]).astype(np.uint8)


def nearest_index(observed: np.ndarray, candidates: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Index of the closest candidate (squared Euclidean) for each row.

    Ties go to the lowest index, which ``argmin`` guarantees.
    """
    observed = np.asarray(observed)
    flat = observed.reshape(-1, candidates.shape[1])
    out = np.empty(len(flat), dtype=np.int64)
    step = max(1, chunk * 64 // max(len(candidates), 1))
    for lo in range(0, len(flat), step):
        diff = flat[lo:lo + step, None, :] - candidates[None, :, :]
        dist = (diff.real**2 + diff.imag**2).sum(axis=-1)
        out[lo:lo + step] = dist.argmin(axis=1)
    return out.reshape(observed.shape[:-1])


def nearest_block(observed, table: PatternTable, constellation: np.ndarray) -> np.ndarray:
    """Closest legal block to ``observed`` over all ``alpha * Q**v`` candidates."""
    cands = candidate_blocks(table, constellation)
    return cands[int(nearest_index(np.asarray(observed)[None, :], cands)[0])]


def assemble_symbol(blocks: np.ndarray, L: int, M: int) -> np.ndarray:
    """Concatenate ``L*M`` blocks into the length-N data vector ``d``.

    Blocks are ordered block-within-subsymbol, so the flat layout is
    ``d[m*K + l*u + j]``. Leading batch axes are kept.
    """
    blocks = np.asarray(blocks)
    if blocks.shape[-2] != L * M:
        raise BlockError(f"expected {L * M} blocks, got {blocks.shape[-2]}")
    return blocks.reshape(blocks.shape[:-2] + (-1,))


def split_symbol(d: np.ndarray, u: int) -> np.ndarray:
    d = np.asarray(d)
    if d.shape[-1] % u:
        raise BlockError(f"symbol length {d.shape[-1]} not a multiple of u={u}")
    return d.reshape(d.shape[:-1] + (-1, u))

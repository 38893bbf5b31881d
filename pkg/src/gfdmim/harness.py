"""Monte Carlo link simulation: datasets for training, BER sweeps, CSV output.

Symbols are simulated in fixed-size chunks, chunk ``i`` drawing from
``default_rng([seed, i])``. Within a chunk the bits, channels and a unit
noise realisation are shared across all SNR points and all detectors, so
curves are paired (common random numbers) and a run is reproducible from
its seed alone.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import channel as ch
from .config import SystemConfig
from .detectors import ML_CAP, RCOND_MIN, ml_search, zf_coarse_batch, zf_decide
from .imcodec import candidate_blocks, int_to_bits, split_symbol, table_for
from .modem import modulation_matrix
from .neural import FineDetectorParams, detect_bits, forward

log = logging.getLogger(__name__)

DETECTORS = ("zf", "ml", "deepconv")
CHUNK = 1000
MIN_ERRORS = 100
SNR_DEFINITION = "mean transmit sample energy E||Ad||^2/N over noise variance"
BIT_ORDER = "index bits then QAM bits, MSB first"


class MissingModel(ValueError):
    pass


class Link:
    """Precomputed transmit-side quantities for one configuration."""

    def __init__(self, config: SystemConfig, profile: str = "epa", pulse: str = "rc"):
        self.config = config
        self.profile = profile
        self.pulse = pulse
        self.dims = config.dims
        self.A = modulation_matrix(config, pulse)
        self.table = table_for(config)
        self.candidates = candidate_blocks(self.table, config.constellation)
        ch.tap_powers(profile, config.n_ch)  # validates the profile
        activity = np.tile(self.table.mask().mean(axis=0), self.dims.L * config.M)
        self.signal_power = ch.signal_power(self.A, activity)

    @property
    def n_blocks(self) -> int:
        return self.dims.L * self.config.M

    def sigma2(self, snr_db: float) -> float:
        return ch.snr_to_sigma(snr_db, self.signal_power)

    def simulate(self, n: int, rng: np.random.Generator, snr_db_list) -> dict:
        """Draw ``n`` symbols and their received vectors at each SNR.

        An SNR of ``inf`` gives a noiseless observation.
        """
        cfg, N = self.config, self.dims.N
        msg = rng.integers(0, len(self.candidates), size=(n, self.n_blocks))
        d = self.candidates[msg].reshape(n, N)
        h = ch.draw_channel(self.profile, cfg.n_ch, rng, size=n)
        H = ch.circulant(h, N)
        clean = ch.apply_channel(d @ self.A.T, h, 0.0)
        w = ch.crandn(rng, (n, N))
        sig = np.array([0.0 if np.isinf(s) and s > 0 else np.sqrt(self.sigma2(s)) for s in snr_db_list])
        y = clean[:, None, :] + sig[None, :, None] * w[:, None, :]
        return {"msg": msg, "Ht": H @ self.A, "y": y, "d": d}


def _chunks(n_symbols: int, seed: int, chunk: int):
    for i, lo in enumerate(range(0, n_symbols, chunk)):
        yield min(chunk, n_symbols - lo), np.random.default_rng([seed, i])


# ---------------------------------------------------------------- datasets

@dataclass
class Dataset:
    header: dict
    bits: np.ndarray          # (R, p) uint8
    blocks: np.ndarray        # (R, u) complex128, ZF-equalised
    symbol_index: np.ndarray  # (R,) uint32, symbol the block came from

    def __len__(self):
        return len(self.bits)


def generate_dataset(config: SystemConfig, n_symbols: int, snr_db: float, seed: int,
                     profile: str = "epa", chunk: int = CHUNK) -> Dataset:
    """(true bits, ZF-equalised block) pairs from ``n_symbols`` symbols.

    Symbols whose equivalent channel fails the conditioning check are
    dropped and counted in the header.
    """
    link = Link(config, profile)
    p, u = link.dims.p, config.u
    bits, blocks, index = [], [], []
    failed = 0
    start = 0
    for n, rng in _chunks(n_symbols, seed, chunk):
        sim = link.simulate(n, rng, [snr_db])
        d_hat, ok = zf_coarse_batch(sim["y"], sim["Ht"])
        failed += int((~ok).sum())
        good = np.flatnonzero(ok)
        blocks.append(split_symbol(d_hat[good, 0], u).reshape(-1, u))
        bits.append(int_to_bits(sim["msg"][good], p).reshape(-1, p))
        index.append(np.repeat(start + good, link.n_blocks).astype(np.uint32))
        start += n
    header = {
        "config": config.as_dict(),
        "profile": profile,
        "n_symbols": n_symbols,
        "snr_db": float(snr_db),
        "seed": seed,
        "chunk": chunk,
        "failed_trials": failed,
        "n_records": int(sum(len(b) for b in bits)),
        "bit_order": BIT_ORDER,
    }
    return Dataset(header, np.concatenate(bits), np.concatenate(blocks), np.concatenate(index))


# Dataset layout (little-endian):
#   8s magic b"GFDMIMDS", u32 version, u32 header length, UTF-8 JSON header,
#   u8 bits[R*p], c16 blocks[R*u], u32 symbol_index[R], u32 CRC-32 of the rest
DATASET_MAGIC = b"GFDMIMDS"
DATASET_VERSION = 1


class DatasetError(ValueError):
    pass


def write_dataset(ds: Dataset, path) -> None:
    head = json.dumps(ds.header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join([
        DATASET_MAGIC, struct.pack("<II", DATASET_VERSION, len(head)), head,
        np.ascontiguousarray(ds.bits, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(ds.blocks, dtype="<c16").tobytes(),
        np.ascontiguousarray(ds.symbol_index, dtype="<u4").tobytes(),
    ])
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def read_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:8] != DATASET_MAGIC:
        raise DatasetError(f"{path}: not a dataset file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise DatasetError(f"{path}: checksum mismatch")
    header = json.loads(data[16:16 + hlen])
    cfg = SystemConfig(**header["config"])
    R, p, u = header["n_records"], cfg.dims.p, cfg.u
    off = 16 + hlen
    if len(data) - off - 4 != R * (p + 16 * u + 4):
        raise DatasetError(f"{path}: record count does not match header")
    bits = np.frombuffer(data, np.uint8, R * p, off).reshape(R, p).copy()
    off += R * p
    blocks = np.frombuffer(data, "<c16", R * u, off).reshape(R, u).astype(complex)
    off += 16 * R * u
    index = np.frombuffer(data, "<u4", R, off).copy()
    return Dataset(header, bits, blocks, index)


def dataset_config(ds: Dataset) -> SystemConfig:
    return SystemConfig(**ds.header["config"])


# ---------------------------------------------------------------- BER sweeps

@dataclass
class BerRecord:
    detector: str
    snr_db: float
    bit_errors: int
    bits_total: int
    symbols: int
    failed_trials: int = 0

    def __post_init__(self):
        if self.bit_errors > self.bits_total:
            raise ValueError("more bit errors than bits")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total if self.bits_total else float("nan")


@dataclass
class _Tally:
    errors: np.ndarray
    symbols: int = 0
    failed: int = 0


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x.astype(np.uint64)).astype(np.int64)


def deepconv_indices(d_hat: np.ndarray, params: FineDetectorParams, u: int) -> np.ndarray:
    """Fine-detector decisions as block message integers."""
    blocks = split_symbol(d_hat, u)
    probs = forward(blocks.reshape(-1, u), params)
    bits = detect_bits(probs).astype(np.int64)
    weights = 1 << np.arange(bits.shape[1] - 1, -1, -1, dtype=np.int64)
    return (bits @ weights).reshape(blocks.shape[:-1])


def ber_sweep(config: SystemConfig, detectors, snr_list, n_symbols: int, seed: int,
              profile: str = "epa", model: FineDetectorParams | None = None,
              ml_cap: int = ML_CAP, chunk: int = CHUNK, min_errors: int = MIN_ERRORS,
              allow_low_confidence: bool = False, rcond_min: float = RCOND_MIN,
              progress=None) -> list[BerRecord]:
    """Bit error rate of each detector at each SNR.

    All detectors see the same symbols, channels and noise. Points with
    fewer than ``min_errors`` bit errors are dropped (with a warning)
    unless ``allow_low_confidence`` is set. Symbols whose equivalent
    channel has a reciprocal condition number below ``rcond_min`` are not
    detected; they are counted in ``failed_trials`` and excluded from
    ``bits_total``.
    """
    if isinstance(detectors, str):
        detectors = [detectors]
    for det in detectors:
        if det not in DETECTORS:
            raise ValueError(f"unknown detector {det!r}")
    if "deepconv" in detectors and model is None:
        raise MissingModel("deepconv needs a trained fine-detector checkpoint")
    link = Link(config, profile)
    if "ml" in detectors:
        from .detectors import InfeasibleSearch, ml_count
        count = ml_count(len(link.candidates), link.n_blocks)
        if count > ml_cap:
            raise InfeasibleSearch(count, ml_cap)
    snr_list = [float(s) for s in snr_list]
    S, u = len(snr_list), config.u
    tallies = {det: _Tally(np.zeros(S, dtype=np.int64)) for det in detectors}
    done = 0
    for n, rng in _chunks(n_symbols, seed, chunk):
        sim = link.simulate(n, rng, snr_list)
        y, Ht, truth = sim["y"], sim["Ht"], sim["msg"]
        d_hat, ok = zf_coarse_batch(y, Ht, rcond_min)
        good = np.flatnonzero(ok)
        truth = truth[good][:, None, :]
        for det in detectors:
            if det == "zf":
                idx = zf_decide(d_hat[good], link.candidates)
            elif det == "deepconv":
                idx = deepconv_indices(d_hat[good], model, u)
            else:
                idx = ml_search(y[good], Ht[good], link.candidates, cap=ml_cap)
            t = tallies[det]
            t.errors += _popcount(idx ^ truth).sum(axis=(0, 2))
            t.symbols += len(good)
            t.failed += n - len(good)
        done += n
        if progress is not None:
            progress(done, n_symbols)
    bits_per_symbol = config.bits_per_symbol
    records = []
    for det in detectors:
        t = tallies[det]
        for s, snr in enumerate(snr_list):
            records.append(BerRecord(det, snr, int(t.errors[s]), t.symbols * bits_per_symbol,
                                     t.symbols, t.failed))
    if not allow_low_confidence:
        kept = [r for r in records if r.bit_errors >= min_errors]
        for r in records:
            if r.bit_errors < min_errors:
                log.warning("dropping %s at %g dB: only %d bit errors (< %d)",
                            r.detector, r.snr_db, r.bit_errors, min_errors)
        records = kept
    return records


COLUMNS = ("detector", "snr_db", "ber", "bit_errors", "bits_total", "symbols", "failed_trials")


def emit_results(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.detector, repr(float(r.snr_db)), repr(r.ber), r.bit_errors,
                        r.bits_total, r.symbols, r.failed_trials])


def read_results(path) -> list[BerRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [BerRecord(r["detector"], float(r["snr_db"]), int(r["bit_errors"]),
                      int(r["bits_total"]), int(r["symbols"]), int(r["failed_trials"]))
            for r in rows]


def write_metadata(path, config: SystemConfig, **extra) -> None:
    meta = {"config": config.as_dict(), "snr_definition": SNR_DEFINITION,
            "bit_order": BIT_ORDER, **extra}
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def snr_at_ber(records, detector: str, target: float, min_errors: int = 0) -> float:
    """SNR where ``detector``'s curve crosses ``target``, interpolating
    linearly in (SNR, log10 BER). NaN if the curve never crosses.

    Only points with at least ``min_errors`` errors are used.
    """
    pts = sorted((r.snr_db, r.ber) for r in records
                 if r.detector == detector and r.bit_errors >= max(min_errors, 1))
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 >= target > b1:
            f = (np.log10(b0) - np.log10(target)) / (np.log10(b0) - np.log10(b1))
            return float(s0 + f * (s1 - s0))
    return float("nan")

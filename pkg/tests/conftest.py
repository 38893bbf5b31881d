"""Shared fixtures: fine detectors trained with the full protocol.

Training is deterministic, so a trained checkpoint is cached under the
pytest cache directory keyed by the protocol and a hash of the package
sources. Delete ``.pytest_cache`` (or run with ``--cache-clear``) to
retrain from scratch.
"""

import hashlib
import json
import logging
import time
from pathlib import Path

import pytest

import gfdmim
from gfdmim.config import SystemConfig
from gfdmim.harness import generate_dataset
from gfdmim.neural import HyperParams, TrainingConfig, load_params, save_params, train

log = logging.getLogger(__name__)

DATA_SEED = 101
TRAIN_SEED = 7
TEST_SEED = 202

# Q -> (training configuration, training symbols)
PROTOCOLS = {
    2: (SystemConfig(K=8, M=1, Q=2), 320_000),
    4: (SystemConfig(K=32, M=1, Q=4), 160_000),
    16: (SystemConfig(K=32, M=1, Q=16), 160_000),
}


def _source_hash() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(gfdmim.__file__).parent.glob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


class TrainedModels:
    """Lazily trains (or loads) one fine detector per constellation size."""

    def __init__(self, cache_dir: Path):
        self.cache_dir = cache_dir
        self.models = {}
        self.histories = {}

    def key(self, Q):
        cfg, n = PROTOCOLS[Q]
        protocol = dict(config=cfg.as_dict(), n=n, data_seed=DATA_SEED, train_seed=TRAIN_SEED,
                    training=TrainingConfig(seed=TRAIN_SEED).__dict__, src=_source_hash())
        return hashlib.sha256(json.dumps(protocol, sort_keys=True).encode()).hexdigest()[:20]

    def __getitem__(self, Q):
        if Q not in self.models:
            self.models[Q] = self._load_or_train(Q)
        return self.models[Q]

    def _load_or_train(self, Q):
        cfg, n = PROTOCOLS[Q]
        path = self.cache_dir / f"q{Q}-{self.key(Q)}.bin"
        hist_path = path.with_suffix(".json")
        if path.exists() and hist_path.exists():
            self.histories[Q] = json.loads(hist_path.read_text())
            return load_params(path)[0]
        start = time.time()
        ds = generate_dataset(cfg, n, TrainingConfig().train_snr_db, seed=DATA_SEED)
        params, history = train(ds.blocks, ds.bits, TrainingConfig(seed=TRAIN_SEED),
                                HyperParams.for_q(Q))
        log.info("trained Q=%d model in %.0f s", Q, time.time() - start)
        save_params(path, params, cfg.v, Q)
        hist_path.write_text(json.dumps(history))
        self.histories[Q] = history
        return params


@pytest.fixture(scope="session")
def trained_models(request):
    return TrainedModels(Path(request.config.cache.mkdir("gfdmim-models")))


# ---------------------------------------------------------------- acceptance report

VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line: ``verdict(number, ok, detail)``; returns ``ok``."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        VERDICTS.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(VERDICTS):
            terminalreporter.write_line(line)

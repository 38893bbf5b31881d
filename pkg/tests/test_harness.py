import math

import numpy as np
import pytest

from gfdmim.config import SystemConfig
from gfdmim.harness import (COLUMNS, BerRecord, DatasetError, Link, MissingModel, ber_sweep,
                            emit_results, generate_dataset, read_dataset, read_results,
                            snr_at_ber, write_dataset)
from gfdmim.imcodec import int_to_bits, split_symbol
from gfdmim.neural import FineDetectorParams

K8 = SystemConfig(K=8, M=1)


def test_dataset_record_count():
    ds = generate_dataset(SystemConfig(K=32, M=1), 50, 15.0, seed=1)
    assert len(ds) == 50 * 8 == ds.header["n_records"]
    assert ds.bits.shape == (400, 4) and ds.blocks.shape == (400, 4)
    np.testing.assert_array_equal(ds.symbol_index, np.repeat(np.arange(50), 8))


def test_dataset_header_carries_config():
    cfg = SystemConfig(K=8, M=3, Q=4)
    ds = generate_dataset(cfg, 10, 10.0, seed=2)
    assert SystemConfig(**ds.header["config"]) == cfg
    assert ds.header["snr_db"] == 10.0 and ds.header["seed"] == 2


def test_dataset_byte_identical(tmp_path):
    for name in ("a", "b"):
        write_dataset(generate_dataset(K8, 1500, 15.0, seed=4), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    write_dataset(generate_dataset(K8, 1500, 15.0, seed=5), tmp_path / "c")
    assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()


def test_dataset_round_trip(tmp_path):
    ds = generate_dataset(SystemConfig(K=8, Q=16), 20, 12.0, seed=6)
    write_dataset(ds, tmp_path / "d.bin")
    back = read_dataset(tmp_path / "d.bin")
    assert back.header == ds.header
    np.testing.assert_array_equal(back.bits, ds.bits)
    np.testing.assert_array_equal(back.blocks, ds.blocks)
    np.testing.assert_array_equal(back.symbol_index, ds.symbol_index)


def test_dataset_corruption_detected(tmp_path):
    write_dataset(generate_dataset(K8, 5, 12.0, seed=6), tmp_path / "d.bin")
    data = bytearray((tmp_path / "d.bin").read_bytes())
    data[-20] ^= 1
    (tmp_path / "bad.bin").write_bytes(bytes(data))
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "bad.bin")
    (tmp_path / "junk.bin").write_bytes(b"hello world, not a dataset")
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "junk.bin")


@pytest.mark.parametrize("cfg", [K8, SystemConfig(K=8, M=3), SystemConfig(K=32, Q=16)])
def test_noiseless_dataset_blocks_exact(cfg):
    ds = generate_dataset(cfg, 40, math.inf, seed=7)
    link = Link(cfg)
    truth = link.candidates[np.array([int("".join(map(str, b)), 2) for b in ds.bits])]
    np.testing.assert_allclose(ds.blocks, truth, atol=1e-8)


def test_simulate_noiseless_matches_model():
    link = Link(K8)
    sim = link.simulate(20, np.random.default_rng(0), [math.inf, 10.0])
    clean = np.einsum("nij,nj->ni", sim["Ht"], sim["d"])
    np.testing.assert_allclose(sim["y"][:, 0], clean, atol=1e-12)
    assert not np.allclose(sim["y"][:, 1], clean)


def test_simulated_snr_matches_definition():
    link = Link(K8)
    sim = link.simulate(20_000, np.random.default_rng(1), [math.inf, 10.0])
    tx = sim["d"] @ link.A.T
    noise = sim["y"][:, 1] - sim["y"][:, 0]
    measured = 10 * np.log10(np.mean(np.abs(tx) ** 2) / np.mean(np.abs(noise) ** 2))
    assert measured == pytest.approx(10.0, abs=0.05)


def test_zf_35db_sanity():
    rec, = ber_sweep(K8, "zf", [35.0], 10_000, seed=8, allow_low_confidence=True)
    assert rec.ber < 1e-2
    assert rec.bits_total == 10_000 * 8


def test_coin_flip_floor():
    # deep in the noise-dominated limit every detector guesses
    model = FineDetectorParams.zeros(4, 16, 64, 4)
    recs = ber_sweep(K8, ["zf", "ml", "deepconv"], [-60.0], 10_000, seed=9, model=model)
    for r in recs:
        assert abs(r.ber - 0.5) < 3 * math.sqrt(0.25 / r.bits_total), r


@pytest.mark.parametrize("cfg,dets", [
    (K8, ["zf", "ml", "deepconv"]),
    (SystemConfig(K=8, M=3), ["zf", "deepconv"]),
    (SystemConfig(K=32, Q=4), ["zf", "deepconv"]),
])
def test_noiseless_end_to_end(cfg, dets, trained_models):
    recs = ber_sweep(cfg, dets, [math.inf], 100, seed=10, model=trained_models[cfg.Q],
                     allow_low_confidence=True)
    assert len(recs) == len(dets)
    for r in recs:
        assert r.bit_errors == 0 and r.bits_total == 100 * cfg.bits_per_symbol


def test_sweep_reproducible():
    a = ber_sweep(K8, ["zf", "ml"], [5.0, 10.0], 2000, seed=11)
    b = ber_sweep(K8, ["zf", "ml"], [5.0, 10.0], 2000, seed=11)
    c = ber_sweep(K8, ["zf", "ml"], [5.0, 10.0], 2000, seed=12)
    assert a == b
    assert a != c


def test_sweep_is_paired_across_detector_sets():
    alone = ber_sweep(K8, "zf", [8.0], 3000, seed=13)
    together = ber_sweep(K8, ["ml", "zf"], [8.0], 3000, seed=13)
    assert alone[0] == [r for r in together if r.detector == "zf"][0]


def test_sweep_snr_points_share_noise_draw():
    one = ber_sweep(K8, "zf", [12.0], 2000, seed=14)
    many = ber_sweep(K8, "zf", [4.0, 12.0], 2000, seed=14)
    assert one[0] == many[1]


def test_low_confidence_points_dropped(caplog):
    recs = ber_sweep(K8, "zf", [0.0, 60.0], 500, seed=15)
    assert [r.snr_db for r in recs] == [0.0]
    assert "fewer" in caplog.text or "only" in caplog.text
    recs = ber_sweep(K8, "zf", [0.0, 60.0], 500, seed=15, allow_low_confidence=True)
    assert [r.snr_db for r in recs] == [0.0, 60.0]


def test_failed_trials_accounted():
    ok = ber_sweep(K8, "zf", [10.0], 500, seed=16)[0]
    assert ok.failed_trials == 0
    strict = ber_sweep(K8, "zf", [10.0], 500, seed=16, rcond_min=0.05,
                       allow_low_confidence=True)[0]
    assert 0 < strict.failed_trials < 500
    assert strict.symbols + strict.failed_trials == 500
    assert strict.bits_total == strict.symbols * 8


def test_deepconv_requires_model():
    with pytest.raises(MissingModel):
        ber_sweep(K8, "deepconv", [10.0], 10, seed=0)


def test_unknown_detector():
    with pytest.raises(ValueError):
        ber_sweep(K8, "mmse", [10.0], 10, seed=0)


def test_ber_record_invariant():
    with pytest.raises(ValueError):
        BerRecord("zf", 0.0, 11, 10, 1)
    assert math.isnan(BerRecord("zf", 0.0, 0, 0, 0).ber)


def test_csv_round_trip(tmp_path):
    recs = ber_sweep(K8, ["zf", "ml"], [0.0, 6.0], 1000, seed=17)
    emit_results(recs, tmp_path / "r.csv")
    assert read_results(tmp_path / "r.csv") == recs
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    for line, r in zip(lines[1:], recs):
        assert float(line.split(",")[2]) == r.bit_errors / r.bits_total


def test_csv_empty_sweep(tmp_path):
    emit_results([], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(COLUMNS) + "\n"
    assert read_results(tmp_path / "e.csv") == []


def test_snr_at_ber_interpolates_in_log_domain():
    recs = [BerRecord("zf", 10.0, 1000, 10**5, 1), BerRecord("zf", 20.0, 10, 10**5, 1)]
    assert snr_at_ber(recs, "zf", 1e-3) == pytest.approx(15.0)
    assert math.isnan(snr_at_ber(recs, "zf", 1e-5))
    assert math.isnan(snr_at_ber(recs, "ml", 1e-3))
    assert math.isnan(snr_at_ber(recs, "zf", 1e-3, min_errors=100))


def test_split_symbol_consistent_with_bits():
    link = Link(K8)
    sim = link.simulate(5, np.random.default_rng(2), [math.inf])
    blocks = split_symbol(sim["d"], 4)
    np.testing.assert_array_equal(blocks, link.candidates[sim["msg"]])
    assert int_to_bits(sim["msg"], 4).shape == (5, 2, 4)

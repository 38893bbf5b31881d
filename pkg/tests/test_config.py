import numpy as np
import pytest

from gfdmim.config import ConfigError, SystemConfig, build_constellation, derive, load_config


@pytest.mark.parametrize("K,M,Q,expected", [
    (32, 1, 2, dict(N=32, L=8, p_i=2, p_q=2, p=4, alpha=4)),
    (8, 3, 2, dict(N=24, L=2, p=4)),
    (32, 1, 16, dict(p_q=8, p=10)),
])
def test_derive_examples(K, M, Q, expected):
    d = derive(SystemConfig(K=K, M=M, u=4, v=2, Q=Q))
    for key, value in expected.items():
        assert getattr(d, key) == value


def test_bits_per_symbol():
    cfg = SystemConfig(K=8, M=3)
    assert cfg.dims.bits_per_subsymbol == cfg.dims.p * cfg.dims.L == 8
    assert cfg.bits_per_symbol == 24


@pytest.mark.parametrize("kwargs", [
    dict(K=10, u=4),           # u does not divide K
    dict(v=4),                 # v == u
    dict(Q=6),                 # not a power of two
    dict(n_cp=3, n_ch=7),      # CP shorter than channel
    dict(rolloff=1.5),
])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig(**kwargs)


def test_n_cp_defaults_to_channel_length():
    assert SystemConfig(n_ch=5).n_cp == 5


def test_bpsk_and_qpsk_points():
    np.testing.assert_array_equal(build_constellation(2), [1, -1])
    q = build_constellation(4)
    np.testing.assert_allclose(sorted(q, key=lambda z: (z.real, z.imag)),
                               np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / np.sqrt(2))


@pytest.mark.parametrize("Q", [2, 4, 16])
def test_constellation_energy(Q):
    c = build_constellation(Q)
    assert len(c) == Q
    assert abs(np.sum(np.abs(c) ** 2) - Q) < 1e-12
    assert len(set(np.round(c, 12))) == Q


@pytest.mark.parametrize("Q", [4, 16])
def test_gray_labelling(Q):
    """Nearest neighbours on the grid differ in exactly one label bit."""
    c = build_constellation(Q)
    dmin = min(abs(a - b) for i, a in enumerate(c) for b in c[i + 1:])
    for i, a in enumerate(c):
        for j, b in enumerate(c):
            if i < j and abs(abs(a - b) - dmin) < 1e-9:
                assert bin(i ^ j).count("1") == 1


def test_unsupported_q():
    with pytest.raises(ConfigError):
        build_constellation(64)


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "link.cfg"
    path.write_text("# desk setup\nK = 8\nM = 3\nQ = 2\nrolloff = 0.5\nnch = 7\n")
    cfg = load_config(path, M=None, Q=4)
    assert (cfg.K, cfg.M, cfg.Q, cfg.n_ch, cfg.n_cp) == (8, 3, 4, 7, 7)


def test_load_config_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("K = 8\nbandwidth = 20\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_config(path)

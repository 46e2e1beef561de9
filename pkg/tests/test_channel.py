import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ciprecode.channel import (
    NoiseSpec, add_noise, format_channel, load_channel, parse_channel, sample_channel,
    save_channel,
)
from ciprecode.errors import ChannelFileError


def test_same_seed_same_channel():
    assert np.array_equal(sample_channel(4, 3, 7), sample_channel(4, 3, 7))
    assert not np.array_equal(sample_channel(4, 3, 7), sample_channel(4, 3, 8))


def test_shape_and_rows_are_prefix_consistent():
    H2 = sample_channel(2, 3, 1)
    assert H2.shape == (2, 3)
    assert np.array_equal(sample_channel(5, 3, 1)[:2], H2)


def test_unit_power_entries():
    H = sample_channel(1000, 1, 0)
    assert 0.9 <= np.mean(np.abs(H) ** 2) <= 1.1


def test_real_and_imag_parts_have_half_variance():
    H = sample_channel(20000, 4, 3)
    assert np.var(H.real) == pytest.approx(0.5, rel=0.03)
    assert np.var(H.imag) == pytest.approx(0.5, rel=0.03)
    assert abs(np.mean(H.real * H.imag)) < 0.02


@pytest.mark.parametrize("K, Nt", [(0, 2), (2, 0)])
def test_zero_dimension_rejected(K, Nt):
    with pytest.raises(ValueError):
        sample_channel(K, Nt, 0)


def test_noise_spec():
    spec = NoiseSpec.from_snr_db(20)
    assert spec.sigma2 == pytest.approx(0.01)
    assert spec.rho * spec.sigma2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        NoiseSpec(0.0)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), -1.0, 0)


def test_noise_variance():
    n = add_noise(np.zeros(100_000), NoiseSpec(0.3), seed=5)
    assert np.mean(np.abs(n) ** 2) == pytest.approx(0.3, rel=0.05)
    assert np.var(n.real) == pytest.approx(0.15, rel=0.05)


def test_noise_vanishes_and_is_deterministic():
    x = np.array([1 + 2j, -3j, 0.5])
    assert np.allclose(add_noise(x, 1e-30, 1), x, atol=1e-13)
    assert np.array_equal(add_noise(x, 0.1, 9), add_noise(x, 0.1, 9))


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_file_round_trip_is_bit_exact(K, Nt, seed):
    H = sample_channel(K, Nt, seed) * 10.0 ** np.random.default_rng(seed).integers(-300, 300)
    assert np.array_equal(parse_channel(format_channel(H)), H)


def test_save_load(tmp_path):
    H = sample_channel(3, 2, 11)
    path = tmp_path / "h.txt"
    save_channel(H, path)
    text = path.read_text()
    assert text.startswith("# 3 2\n")
    assert "np.float64" not in text
    assert np.array_equal(load_channel(path), H)


@pytest.mark.parametrize("text, line, field", [
    ("", None, None),
    ("# 2 2\n1:0 0:0\n0:1\n", 3, None),            # wrong column count
    ("# 2 2\n1:0 0:0\n", 2, None),                  # missing row
    ("2 2\n1:0 0:0\n0:0 1:0\n", 1, None),           # no header marker
    ("# 1 2\n1:0 0.5\n", 2, 2),                     # field without ':'
    ("# 1 2\nx:0 1:1\n", 2, 1),                     # bad number
    ("# a 2\n1:0 1:1\n", 1, None),
])
def test_malformed_files(text, line, field):
    with pytest.raises(ChannelFileError) as err:
        parse_channel(text)
    assert err.value.line == line
    assert err.value.field == field
    if line is not None:
        assert f"line {line}" in str(err.value)

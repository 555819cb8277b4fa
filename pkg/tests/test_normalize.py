import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from procaudit import normalize
from procaudit.normalize import FitError, NormalizationStats, StatsFormatError


def column(values):
    x = np.zeros((len(values), 8))
    x[:, 0] = values
    return x


def test_fit_examples():
    stats = normalize.fit(column([2, 4, 6, 8]))
    assert (stats.mins[0], stats.maxs[0]) == (2, 8)
    one = normalize.fit(np.arange(8.0)[None, :])
    assert one.mins == one.maxs
    const = normalize.fit(np.full((5, 8), 3.5))
    assert set(const.mins) == set(const.maxs) == {3.5}


def test_fit_empty_rejected():
    with pytest.raises(FitError):
        normalize.fit(np.zeros((0, 8)))


def test_transform_against_exact_rational_oracle():
    values = [2, 4, 6, 8]
    lo, hi = Fraction(min(values)), Fraction(max(values))
    expected = [float((Fraction(v) - lo) / (hi - lo)) for v in values]
    assert expected == [0.0, 1 / 3, 2 / 3, 1.0]
    out = normalize.transform(column(values), normalize.fit(column(values)))
    np.testing.assert_allclose(out[:, 0], expected, rtol=0, atol=1e-15)


def test_transform_midpoint_endpoints_and_clamp():
    stats = normalize.fit(column([0, 10]))
    out = normalize.transform(column([5, 0, 10, -3, 14]), stats)[:, 0]
    np.testing.assert_array_equal(out, [0.5, 0.0, 1.0, 0.0, 1.0])


def test_degenerate_column_maps_to_zero():
    x = np.random.default_rng(0).uniform(size=(6, 8))
    x[:, 3] = 7.0
    out = normalize.transform(x, normalize.fit(x))
    assert np.all(out[:, 3] == 0.0)


@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(8)),
              elements=st.floats(-1e6, 1e6)))
def test_fitted_data_in_unit_interval_and_order_preserved(x):
    stats = normalize.fit(x)
    out = normalize.transform(x, stats)
    assert np.all((out >= 0) & (out <= 1))
    for j in range(8):
        order = np.argsort(x[:, j], kind="stable")
        assert np.all(np.diff(out[order, j]) >= 0)


def test_save_load_round_trip():
    x = np.random.default_rng(1).normal(size=(20, 8)) * 1e5
    stats = normalize.fit(x)
    buf = io.BytesIO()
    normalize.save(stats, buf)
    assert normalize.load(buf.getvalue()) == stats
    assert buf.getvalue().decode().startswith("procaudit-normstats 1\nPSN ")


def test_save_load_path(tmp_path):
    stats = NormalizationStats(tuple(range(8)), tuple(range(1, 9)))
    normalize.save(stats, tmp_path / "s.txt")
    assert normalize.load(tmp_path / "s.txt") == stats


@pytest.mark.parametrize("blob", [
    b"",
    b"procaudit-normstats 1\nPSN 0.0 1.0\n",
    b"procaudit-normstats 9\n",
    b"garbage\n",
])
def test_load_rejects_bad_streams(blob):
    with pytest.raises(StatsFormatError):
        normalize.load(blob)


def test_truncated_stream_rejected():
    text = NormalizationStats(tuple([0.0] * 8), tuple([1.0] * 8)).dumps().encode()
    with pytest.raises(StatsFormatError):
        normalize.load(text[: len(text) // 2])

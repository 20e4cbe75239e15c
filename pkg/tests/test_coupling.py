import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowspike import synth
from slowspike.core import InputError
from slowspike.coupling import correlation_matrix, mean_matrix, separation_decay
from slowspike.ingest import detrend, normalise


def brute_pearson(x, y):
    """Oracle: textbook Pearson formula in plain Python sums."""
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def corr_of(x):
    return correlation_matrix(normalise(np.asarray(x, dtype=float)))


def test_self_and_anticorrelation(rng):
    x = rng.normal(size=500)
    m = corr_of([x, x, -x])
    assert m.values[0, 1] == pytest.approx(1.0)
    assert m.values[0, 2] == pytest.approx(-1.0)


def test_independent_noise_pair():
    x = np.random.default_rng(42).normal(size=(2, 100_000))
    m = corr_of(x)
    assert abs(m.values[0, 1]) < 0.02
    assert m.values[0, 1] == pytest.approx(brute_pearson(list(x[0]), list(x[1])), abs=1e-12)


def test_matches_oracle_with_gaps(rng):
    x = rng.normal(size=(8, 400)).cumsum(axis=1)
    x[2, 50:120] = np.nan
    x[5, 300:] = np.nan
    m = corr_of(x)
    for i in range(8):
        for j in range(8):
            both = np.isfinite(x[i]) & np.isfinite(x[j])
            expected = 1.0 if i == j else brute_pearson(list(x[i, both]), list(x[j, both]))
            assert m.values[i, j] == pytest.approx(expected, abs=1e-9)
            assert m.n_overlap[i, j] == both.sum()


def test_structure_invariants(rng):
    x = rng.normal(size=(8, 1000))
    x[3] = 2.0
    m = corr_of(x)
    v = m.values
    assert np.array_equal(v, v.T, equal_nan=True)
    assert all(v[i, i] == 1.0 for i in range(8) if i != 3)
    assert np.isnan(v[3]).all()
    assert np.nanmax(np.abs(v)) <= 1 + 1e-12
    assert {int(d) for d in m.excluded} == {3}


def test_low_overlap_undefined_and_all_undefined_rejected(rng):
    x = rng.normal(size=(2, 300))
    x[0, 150:] = np.nan
    x[1, :210] = np.nan
    with pytest.raises(InputError, match="insufficient joint coverage"):
        corr_of(x)
    x = rng.normal(size=(3, 300))
    x[0, 150:] = np.nan
    x[1, :210] = np.nan
    m = corr_of(x)
    assert np.isnan(m.values[0, 1]) and np.isfinite(m.values[0, 2])


@given(st.lists(st.floats(0.01, 100), min_size=8, max_size=8),
       st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=8))
@settings(max_examples=30, deadline=None)
def test_affine_invariance(scales, shifts):
    x = np.random.default_rng(17).normal(size=(8, 600)).cumsum(axis=1)
    moved = np.asarray(scales)[:, None] * x + np.asarray(shifts)[:, None]
    np.testing.assert_allclose(corr_of(moved).values, corr_of(x).values, atol=1e-9)


def test_decay_constant_matrix():
    v = np.full((8, 8), 0.5)
    np.fill_diagonal(v, 1.0)
    d = separation_decay(v, "linear")
    assert d.separations == tuple(range(1, 8))
    assert all(m == pytest.approx(0.5) for m in d.mean_r)
    assert all(s == pytest.approx(0.0) for s in d.sd_r)


def test_decay_pair_counts():
    v = np.eye(8)
    assert separation_decay(v, "linear").n_pairs == (7, 6, 5, 4, 3, 2, 1)
    assert separation_decay(v, "circular").n_pairs == (8, 8, 8, 4)


def test_decay_matches_brute_force(rng):
    a = rng.uniform(-1, 1, (8, 8))
    v = (a + a.T) / 2
    np.fill_diagonal(v, 1.0)
    v[1, 4] = v[4, 1] = np.nan
    d = separation_decay(v, "circular")
    for s, mean, sd, n in zip(d.separations, d.mean_r, d.sd_r, d.n_pairs):
        vals = [v[i, j] for i in range(8) for j in range(i + 1, 8)
                if min(j - i, 8 - (j - i)) == s and np.isfinite(v[i, j])]
        assert n == len(vals)
        assert mean == pytest.approx(np.mean(vals))
        assert sd == pytest.approx(np.std(vals))


def _synth_matrix(mix, seed, metric="linear"):
    rec, _ = synth.generate(synth.coupled_noise(mix, seed=seed, metric=metric))
    return correlation_matrix(normalise(detrend(rec, 3600)))


def test_exponential_coupling_decays_strictly():
    mix = {s: float(np.exp(-s / 2)) for s in range(1, 8)}
    d = separation_decay(_synth_matrix(mix, 0), "linear")
    assert np.all(np.diff(d.mean_r) < 0)


def test_nearest_neighbour_coupling():
    d = separation_decay(_synth_matrix({1: 0.4}, 1), "linear")
    means = dict(zip(d.separations, d.mean_r))
    assert means[1] > max(means[s] for s in range(3, 8))
    assert means[1] == pytest.approx(0.4, abs=0.05)


def test_zero_coupling_within_null_bound():
    m = _synth_matrix({}, 2)
    off = ~np.eye(8, dtype=bool)
    bound = 3 / np.sqrt(m.n_overlap[off])
    assert np.all(np.abs(m.values[off]) < bound)


def test_mean_matrix_skips_undefined():
    a = np.array([[1.0, 0.2], [0.2, 1.0]])
    b = np.array([[1.0, np.nan], [np.nan, 1.0]])
    c = np.array([[1.0, 0.6], [0.6, 1.0]])
    from slowspike.coupling import CorrelationMatrix
    mats = [CorrelationMatrix(v, np.full((2, 2), 100)) for v in (a, b, c)]
    out = mean_matrix(mats)
    assert out.values[0, 1] == pytest.approx(0.4)
    assert out.n_overlap[0, 1] == 300

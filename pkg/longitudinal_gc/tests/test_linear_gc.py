import numpy as np
import pytest

from longitudinal_gc.data.dataset import Individual, LongitudinalDataset
from longitudinal_gc.engine.linear_gc import (
    difference,
    f_test,
    fit_and_test,
    granger_tests,
    interpolate_missing,
    lagged_design,
)
from longitudinal_gc.errors import ConfigError, DataError


# -----------------------------
# Helpers
# -----------------------------

def driven_pair(n=30, t=12, coef=0.9, seed=0):
    """x is white noise, y(t) = coef * x(t-1) + small noise."""
    rng = np.random.default_rng(seed)
    inds = []
    for i in range(n):
        x = rng.normal(size=t)
        y = np.zeros(t)
        y[1:] = coef * x[:-1] + 0.1 * rng.normal(size=t - 1)
        inds.append(Individual(f"p{i:03d}", np.arange(t, dtype=float), np.column_stack([x, y]),
                               np.ones((t, 2), dtype=bool)))
    return LongitudinalDataset(tuple(inds), ("x", "y"))


def rss(x, y):
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ beta
    return float(r @ r)


# -----------------------------
# Preprocessing
# -----------------------------

def test_interpolation_fills_interior_gap_linearly():
    values = np.array([[0.0], [np.nan], [4.0]])
    ind = Individual("a", [0.0, 1.0, 2.0], values, [[True], [False], [True]])
    out = interpolate_missing(LongitudinalDataset((ind,), ("v",)))
    assert out.individuals[0].values[1, 0] == pytest.approx(2.0)
    assert out.individuals[0].observed.all()


def test_interpolation_uses_timestamps_not_positions():
    ind = Individual("a", [0.0, 1.0, 4.0], [[0.0], [np.nan], [8.0]], [[True], [False], [True]])
    out = interpolate_missing(LongitudinalDataset((ind,), ("v",)))
    assert out.individuals[0].values[1, 0] == pytest.approx(2.0)


def test_interpolation_edges_take_nearest_observed_value():
    ind = Individual("a", [0.0, 1.0, 2.0, 3.0], [[np.nan], [3.0], [5.0], [np.nan]],
                     [[False], [True], [True], [False]])
    out = interpolate_missing(LongitudinalDataset((ind,), ("v",)))
    np.testing.assert_allclose(out.individuals[0].values[:, 0], [3.0, 3.0, 5.0, 5.0])


def test_all_missing_series_is_zero_filled_and_flagged():
    values = np.array([[1.0, np.nan], [2.0, np.nan]])
    observed = np.array([[True, False], [True, False]])
    ind = Individual("a", [0.0, 1.0], values, observed)
    out = interpolate_missing(LongitudinalDataset((ind,), ("v", "w")))
    np.testing.assert_array_equal(out.individuals[0].values[:, 1], [0.0, 0.0])
    assert out.meta["interpolation_flags"] == [["a", "w"]]


def test_difference_drops_first_timepoint():
    ind = Individual("a", [0.0, 1.0, 2.0], [[1.0], [3.0], [6.0]], [[True]] * 3)
    out = difference(LongitudinalDataset((ind,), ("v",)))
    np.testing.assert_array_equal(out.individuals[0].values[:, 0], [2.0, 3.0])
    np.testing.assert_array_equal(out.individuals[0].times, [1.0, 2.0])


# -----------------------------
# Design + F-test
# -----------------------------

def test_lagged_rows_never_cross_individuals():
    a = Individual("a", [0.0, 1.0, 2.0], [[1.0], [2.0], [3.0]], [[True]] * 3)
    b = Individual("b", [0.0, 1.0, 2.0], [[10.0], [20.0], [30.0]], [[True]] * 3)
    design = lagged_design(LongitudinalDataset((a, b), ("v",)), 1)
    assert design.n_rows == 4
    np.testing.assert_array_equal(design.targets[:, 0], [2.0, 3.0, 20.0, 30.0])
    np.testing.assert_array_equal(design.lags[:, 0, 0], [1.0, 2.0, 10.0, 20.0])
    np.testing.assert_array_equal(design.owners, [0, 0, 1, 1])


def test_lagged_design_requires_complete_cells():
    ind = Individual("a", [0.0, 1.0], [[1.0], [np.nan]], [[True], [False]])
    with pytest.raises(DataError):
        lagged_design(LongitudinalDataset((ind,), ("v",)), 1)


def test_f_statistic_matches_direct_least_squares():
    rng = np.random.default_rng(11)
    t = 15
    values = rng.normal(size=(t, 2))
    ind = Individual("a", np.arange(t, dtype=float), values, np.ones((t, 2), dtype=bool))
    result = granger_tests(LongitudinalDataset((ind,), ("x", "y")), p=1)

    target = values[1:, 1]
    full = np.column_stack([np.ones(t - 1), values[:-1, 0], values[:-1, 1]])
    restricted = np.column_stack([np.ones(t - 1), values[:-1, 1]])
    rss_f, rss_r = rss(full, target), rss(restricted, target)
    expected = (rss_r - rss_f) / 1 / (rss_f / (t - 1 - 3))
    assert result.f_statistic[0, 1] == pytest.approx(expected, rel=1e-8)
    assert result.rss_full[0, 1] == pytest.approx(rss_f, rel=1e-8)


def test_restricted_rss_never_below_full():
    result = granger_tests(driven_pair(n=10, seed=4), p=2)
    off = ~np.eye(2, dtype=bool)
    assert np.all(result.rss_restricted[off] >= result.rss_full[off])
    assert np.all((result.p_value[off] >= 0) & (result.p_value[off] <= 1))


def test_f_test_degenerate_cases():
    assert f_test(1.0, 1.0, 1, 10) == (0.0, 1.0)
    f, p = f_test(2.0, 0.0, 1, 10)
    assert f == np.inf and p == 0.0


# -----------------------------
# End to end
# -----------------------------

def test_strong_lagged_driver_is_recovered_in_one_direction():
    graph = fit_and_test(driven_pair(), p=1, alpha=0.001)
    assert graph.has_edge("x", "y")
    assert not graph.has_edge("y", "x")


def test_bivariate_and_differenced_variants_run():
    data = driven_pair(seed=2)
    assert fit_and_test(data, p=1, alpha=0.001, bivariate=True).has_edge("x", "y")
    result = granger_tests(data, p=1, differencing=True)
    assert result.n_rows == 30 * 10


def test_sparse_data_is_interpolated_before_fitting():
    data = driven_pair(seed=5)
    rng = np.random.default_rng(0)
    holey = []
    for ind in data.individuals:
        observed = rng.random(ind.observed.shape) > 0.2
        observed[0] = True
        holey.append(Individual(ind.id, ind.times, ind.values, observed))
    result = granger_tests(LongitudinalDataset(tuple(holey), data.variable_names), p=1)
    assert result.n_rows == 30 * 11
    assert np.all(np.isfinite(result.f_statistic[~np.eye(2, dtype=bool)]))


def test_too_few_rows_and_bad_arguments():
    tiny = driven_pair(n=1, t=3)
    with pytest.raises(DataError):
        granger_tests(tiny, p=1)
    with pytest.raises(ConfigError):
        granger_tests(driven_pair(n=2), p=0)
    with pytest.raises(ConfigError):
        fit_and_test(driven_pair(n=2), alpha=0.0)

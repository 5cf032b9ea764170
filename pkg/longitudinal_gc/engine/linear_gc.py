"""
Linear Granger baseline

VAR(p) regressions on the concatenation of all individuals' lagged rows,
with a residual-sum-of-squares F-test per ordered pair. Missing cells are
linearly interpolated against the timestamps first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import stats
from statsmodels.regression.linear_model import OLS

from longitudinal_gc.data.dataset import Individual, LongitudinalDataset
from longitudinal_gc.engine.graph_ops import CausalGraph
from longitudinal_gc.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

RIDGE_JITTER = 1e-8


# -----------------------------
# Interpolation
# -----------------------------

def interpolate_missing(data: LongitudinalDataset) -> LongitudinalDataset:
    """Fill gaps linearly in time; edges take the nearest observed value, all-missing -> 0."""
    out, flags = [], []
    for ind in data.individuals:
        values = np.array(ind.values)
        for k, name in enumerate(data.variable_names):
            seen = ind.observed[:, k]
            if seen.all():
                continue
            if not seen.any():
                values[:, k] = 0.0
                flags.append([ind.id, name])
                continue
            values[:, k] = np.interp(ind.times, ind.times[seen], ind.values[seen, k])
        out.append(Individual(ind.id, ind.times, values, np.ones_like(ind.observed)))
    if flags:
        logger.warning("%d individual/variable series had no observations and were zero-filled", len(flags))
    return LongitudinalDataset(tuple(out), data.variable_names, {**data.meta, "interpolation_flags": flags})


def difference(data: LongitudinalDataset) -> LongitudinalDataset:
    """First differences per individual; individuals with one timepoint are dropped."""
    out = []
    for ind in data.individuals:
        if ind.n_timepoints < 2:
            continue
        out.append(Individual(ind.id, ind.times[1:], np.diff(ind.values, axis=0),
                              ind.observed[1:] & ind.observed[:-1]))
    return LongitudinalDataset(tuple(out), data.variable_names, dict(data.meta))


# -----------------------------
# Design matrices
# -----------------------------

@dataclass(frozen=True, eq=False)
class LaggedDesign:
    targets: np.ndarray      # [rows, K] value at t
    lags: np.ndarray         # [rows, p, K] value at t - 1 ... t - p
    owners: np.ndarray       # [rows] individual position the row came from

    @property
    def n_rows(self) -> int:
        return int(self.targets.shape[0])


def lagged_design(data: LongitudinalDataset, p: int) -> LaggedDesign:
    """Per-individual lagged rows stacked; no row mixes two individuals."""
    targets, lags, owners = [], [], []
    for n, ind in enumerate(data.individuals):
        t_len = ind.n_timepoints
        if t_len <= p:
            continue
        if not ind.observed.all():
            raise DataError(f"Individual {ind.id!r} has missing cells; interpolate first")
        for t in range(p, t_len):
            targets.append(ind.values[t])
            lags.append(ind.values[t - p:t][::-1])
            owners.append(n)
    k = data.n_variables
    if not targets:
        return LaggedDesign(np.empty((0, k)), np.empty((0, p, k)), np.empty(0, dtype=int))
    return LaggedDesign(np.asarray(targets), np.asarray(lags), np.asarray(owners))


def _regressors(design: LaggedDesign, sources: Sequence[int]) -> np.ndarray:
    cols = [np.ones(design.n_rows)]
    for lag in range(design.lags.shape[1]):
        for s in sources:
            cols.append(design.lags[:, lag, s])
    return np.column_stack(cols)


def _fit_rss(x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    if np.linalg.matrix_rank(x) < x.shape[1]:
        logger.warning("Singular design matrix (%d columns); ridge fallback with jitter %.0e",
                       x.shape[1], RIDGE_JITTER)
        beta = np.linalg.solve(x.T @ x + RIDGE_JITTER * np.eye(x.shape[1]), x.T @ y)
        resid = y - x @ beta
        return float(resid @ resid), beta
    result = OLS(y, x).fit()
    return float(result.ssr), np.asarray(result.params)


def f_test(rss_restricted: float, rss_full: float, q: int, df_resid: int) -> Tuple[float, float]:
    """F = ((RSS_r - RSS_f) / q) / (RSS_f / df_resid)."""
    rss_restricted = max(rss_restricted, rss_full)
    if rss_full <= 0.0:
        f = np.inf if rss_restricted > rss_full else 0.0
    else:
        f = (rss_restricted - rss_full) / q / (rss_full / df_resid)
    return float(f), float(stats.f.sf(f, q, df_resid))


# -----------------------------
# VAR Model + Tests
# -----------------------------

@dataclass(frozen=True, eq=False)
class VarModel:
    variable_names: Tuple[str, ...]
    lag_order: int
    coefficients: np.ndarray      # [lag, target, source]
    intercept: np.ndarray         # [target]
    residual_variance: np.ndarray # [target]

    def validate(self) -> None:
        if self.lag_order < 1:
            raise ValueError("lag_order must be >= 1")
        if not (np.all(np.isfinite(self.coefficients)) and np.all(np.isfinite(self.intercept))):
            raise ValueError("VarModel coefficients must be finite")


@dataclass(frozen=True, eq=False)
class LinearGcResult:
    model: VarModel
    f_statistic: np.ndarray   # [cause, effect], NaN diagonal
    p_value: np.ndarray
    rss_full: np.ndarray      # [cause, effect]
    rss_restricted: np.ndarray
    n_rows: int

    def graph(self, alpha: float) -> CausalGraph:
        names = self.model.variable_names
        k = len(names)
        scores = {
            (names[u], names[v]): float(self.f_statistic[u, v])
            for u in range(k) for v in range(k)
            if u != v and self.p_value[u, v] < alpha
        }
        return CausalGraph(names, scores)


def granger_tests(data: LongitudinalDataset, p: int = 1, bivariate: bool = False,
                  differencing: bool = False) -> LinearGcResult:
    if p < 1:
        raise ConfigError("lag order must be >= 1")
    if any(not ind.observed.all() for ind in data.individuals):
        data = interpolate_missing(data)
    if differencing:
        data = difference(data)

    design = lagged_design(data, p)
    k = data.n_variables
    n_full_params = 1 + p * (2 if bivariate else k)
    if design.n_rows <= 1 + p * k:
        raise DataError(f"Only {design.n_rows} lagged rows for a VAR({p}) over {k} variables")

    coefficients = np.zeros((p, k, k))
    intercept = np.zeros(k)
    resid_var = np.zeros(k)
    f_stat = np.full((k, k), np.nan)
    p_val = np.full((k, k), np.nan)
    rss_f = np.full((k, k), np.nan)
    rss_r = np.full((k, k), np.nan)

    everyone = list(range(k))
    for v in range(k):
        y = design.targets[:, v]
        rss_all, beta = _fit_rss(_regressors(design, everyone), y)
        intercept[v] = beta[0]
        coefficients[:, v, :] = beta[1:].reshape(p, k)
        resid_var[v] = rss_all / (design.n_rows - (1 + p * k))

        for u in range(k):
            if u == v:
                continue
            if bivariate:
                full_sources = [v, u]
                full_rss, _ = _fit_rss(_regressors(design, full_sources), y)
                df_resid = design.n_rows - n_full_params
            else:
                full_sources = everyone
                full_rss = rss_all
                df_resid = design.n_rows - (1 + p * k)
            restricted_rss, _ = _fit_rss(_regressors(design, [s for s in full_sources if s != u]), y)
            f_stat[u, v], p_val[u, v] = f_test(restricted_rss, full_rss, p, df_resid)
            rss_f[u, v], rss_r[u, v] = full_rss, max(restricted_rss, full_rss)

    model = VarModel(tuple(data.variable_names), p, coefficients, intercept, resid_var)
    model.validate()
    return LinearGcResult(model, f_stat, p_val, rss_f, rss_r, design.n_rows)


def fit_and_test(data: LongitudinalDataset, p: int = 1, alpha: float = 0.05,
                 bivariate: bool = False, differencing: bool = False) -> CausalGraph:
    """Edge (u, v) iff u's lags significantly improve the regression of v (F-test p < alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    result = granger_tests(data, p, bivariate, differencing)
    graph = result.graph(alpha)
    logger.info("Linear GC (p=%d, %d rows): %d edges", p, result.n_rows, len(graph.scores))
    return graph

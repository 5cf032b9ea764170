"""
SplitRunner - trains and evaluates one forecaster per cross-validation split

Splits are independent jobs and may run on a joblib worker pool. Results are
always reduced in split-index order, so the assembled table does not depend
on completion order or worker count.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import torch
from joblib import Parallel, delayed

from longitudinal_gc.data.dataset import LongitudinalDataset, Standardizer, apply_standardizer, fit_standardizer
from longitudinal_gc.engine.forecaster import ForecastModel, MaskSpec, TrainConfig, evaluate_mse, mse_by_variable, train
from longitudinal_gc.engine.splits import Split, SplitPlan, split_seed

logger = logging.getLogger(__name__)


# -----------------------------
# ΔMSE
# -----------------------------

def compute_delta_mse(model: ForecastModel, test: LongitudinalDataset, cause: str, effect: str) -> float:
    """MSE of `effect` with `cause` withheld minus MSE of `effect` with full input."""
    if cause == effect:
        raise ValueError("ΔMSE is undefined for a self-pair")
    u = test.index_of(cause)
    restricted = evaluate_mse(model, test, effect, MaskSpec.of(u))
    full = evaluate_mse(model, test, effect, MaskSpec.none())
    return restricted - full


def delta_mse_matrix(model: ForecastModel, test: LongitudinalDataset) -> np.ndarray:
    """ΔMSE[u, v] for every ordered pair using K + 1 forward passes; NaN on the diagonal and
    wherever the effect has no observed target cells."""
    k = test.n_variables
    full = mse_by_variable(model, test, MaskSpec.none())
    delta = np.full((k, k), np.nan)
    for u in range(k):
        restricted = mse_by_variable(model, test, MaskSpec.of(u))
        delta[u] = restricted - full
    delta[np.arange(k), np.arange(k)] = np.nan
    return delta


# -----------------------------
# One split
# -----------------------------

@dataclass
class SplitResult:
    split: Split
    delta: np.ndarray
    mse_full: np.ndarray
    best_val_loss: float
    epochs_run: int
    seconds: float
    model: Optional[ForecastModel] = None


def run_split(data: LongitudinalDataset, split: Split, train_cfg: TrainConfig, seed: int,
              standardization: str = "global", keep_model: bool = False,
              threads: Optional[int] = None) -> SplitResult:
    if threads:
        torch.set_num_threads(threads)
    started = time.perf_counter()

    train_set, val_set, test_set = (data.subset(ids) for ids in (split.train_ids, split.val_ids, split.test_ids))
    standardizer: Optional[Standardizer] = None
    if standardization == "train_fold":
        standardizer = fit_standardizer(train_set, allow_unobserved=True)
        train_set, val_set, test_set = (apply_standardizer(d, standardizer) for d in (train_set, val_set, test_set))
    else:
        raw = data.meta.get("standardizer")
        standardizer = Standardizer.from_dict(raw) if raw else None

    cfg = train_cfg.with_seed(split_seed(seed, split.index))
    model = train(train_set, val_set, cfg, standardizer)
    delta = delta_mse_matrix(model, test_set)
    full = mse_by_variable(model, test_set, MaskSpec.none())

    return SplitResult(
        split=split,
        delta=delta,
        mse_full=full,
        best_val_loss=model.best_val_loss,
        epochs_run=model.epochs_run,
        seconds=time.perf_counter() - started,
        model=model if keep_model else None,
    )


# -----------------------------
# Runner
# -----------------------------

class SplitRunner:
    """Runs every split of a plan and hands results to `on_result` in split order."""

    def __init__(self, data: LongitudinalDataset, train_cfg: TrainConfig, seed: int = 0,
                 standardization: str = "global", workers: Optional[int] = None,
                 keep_models: bool = False,
                 on_result: Optional[Callable[[SplitResult], None]] = None):
        self.data = data
        self.train_cfg = train_cfg
        self.seed = seed
        self.standardization = standardization
        self.workers = workers or os.cpu_count() or 1
        self.keep_models = keep_models
        self.on_result = on_result

    def run(self, plan: SplitPlan) -> List[SplitResult]:
        splits = plan.splits
        n_jobs = min(self.workers, len(splits))
        logger.info("Running %d splits on %d worker(s)", len(splits), n_jobs)

        if n_jobs == 1:
            results = [self._job(s, None) for s in splits]
        else:
            results = Parallel(n_jobs=n_jobs, backend="loky")(
                delayed(run_split)(self.data, s, self.train_cfg, self.seed,
                                   self.standardization, self.keep_models, 1)
                for s in splits
            )

        results = sorted(results, key=lambda r: r.split.index)
        for r in results:
            logger.info("  [Split %d/%d] rep=%d fold=%d: val_loss=%.4f, epochs=%d",
                        r.split.index + 1, len(splits), r.split.repetition, r.split.fold,
                        r.best_val_loss, r.epochs_run)
            if self.on_result is not None:
                self.on_result(r)
        return results

    def _job(self, split: Split, threads: Optional[int]) -> SplitResult:
        return run_split(self.data, split, self.train_cfg, self.seed,
                         self.standardization, self.keep_models, threads)

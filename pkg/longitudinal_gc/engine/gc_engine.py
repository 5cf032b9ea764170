"""
Association detection

Trains one forecaster per cross-validation split, collects ΔMSE samples for
every ordered variable pair on held-out individuals and keeps the pairs whose
mean ΔMSE is significantly positive. Edge (u, v) reads "u causes v": u is the
withheld input, v the predicted variable.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from gc_runtime import ALTERNATIVES, DeltaMseDecision, PairVerdict, enforce_table_invariants, verdict_summary
from longitudinal_gc.data.dataset import LongitudinalDataset, standardize
from longitudinal_gc.engine.forecaster import TrainConfig
from longitudinal_gc.engine.graph_ops import CausalGraph
from longitudinal_gc.engine.split_runner import SplitResult, SplitRunner, compute_delta_mse, delta_mse_matrix
from longitudinal_gc.engine.splits import SplitPlan, make_split_plan
from longitudinal_gc.errors import ConfigError

logger = logging.getLogger(__name__)

__all__ = [
    "DetectionConfig",
    "DeltaMseTable",
    "build_table",
    "compute_delta_mse",
    "delta_mse_matrix",
    "detect_edges",
    "make_split_plan",
]

STANDARDIZATION_MODES = ("global", "train_fold")


@dataclass(frozen=True)
class DetectionConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 4
    alpha: float = 0.05
    alternative: str = "greater"
    workers: Optional[int] = None
    seed: int = 0
    standardization: str = "global"
    keep_models: bool = False

    def validate(self) -> None:
        self.train.validate()
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.alternative not in ALTERNATIVES:
            raise ConfigError(f"alternative must be one of {ALTERNATIVES}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.standardization not in STANDARDIZATION_MODES:
            raise ConfigError(f"standardization must be one of {STANDARDIZATION_MODES}")

    @classmethod
    def from_settings(cls, settings: Mapping[str, Any], keep_models: bool = False) -> "DetectionConfig":
        detection = settings["detection"]
        cfg = cls(
            train=TrainConfig.from_settings(settings["forecaster"], seed=settings["seed"]),
            repetitions=detection["repetitions"],
            alpha=detection["alpha"],
            alternative=detection["alternative"],
            workers=detection.get("workers"),
            seed=settings["seed"],
            standardization=settings["data"]["standardization"],
            keep_models=keep_models,
        )
        cfg.validate()
        return cfg


# -----------------------------
# ΔMSE Table
# -----------------------------

@dataclass(frozen=True, eq=False)
class DeltaMseTable:
    variable_names: Tuple[str, ...]
    samples: np.ndarray
    verdicts: Dict[Tuple[str, str], PairVerdict]
    alpha: float = 0.05
    alternative: str = "greater"

    @property
    def n_splits(self) -> int:
        return int(self.samples.shape[2])

    def signature(self) -> str:
        """SHA3-256 over every pair verdict, in variable order."""
        digest = hashlib.sha3_256()
        for cause in self.variable_names:
            for effect in self.variable_names:
                if cause != effect:
                    digest.update(self.verdicts[(cause, effect)].signature().encode("ascii"))
        return digest.hexdigest()

    def untestable(self) -> List[Tuple[str, str]]:
        return [pair for pair, v in self.verdicts.items() if not v.testable]

    def candidate_graph(self) -> CausalGraph:
        scores = {pair: v.t_statistic for pair, v in self.verdicts.items() if v.significant}
        return CausalGraph(self.variable_names, scores)

    def sample_frame(self) -> pd.DataFrame:
        rows = [
            (cause, effect, s, self.samples[i, j, s])
            for i, cause in enumerate(self.variable_names)
            for j, effect in enumerate(self.variable_names)
            if i != j
            for s in range(self.n_splits)
        ]
        return pd.DataFrame(rows, columns=["cause", "effect", "split", "delta_mse"])

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for cause in self.variable_names:
            for effect in self.variable_names:
                if cause == effect:
                    continue
                v = self.verdicts[(cause, effect)]
                rows.append((cause, effect, v.t_statistic, v.p_value, v.n_samples, v.n_missing,
                             v.testable, v.significant))
        return pd.DataFrame(rows, columns=["cause", "effect", "t", "p", "n_samples", "n_missing",
                                           "testable", "significant"])


def build_table(samples: np.ndarray, variable_names: Tuple[str, ...], alpha: float = 0.05,
                alternative: str = "greater") -> DeltaMseTable:
    """Run the per-pair t-test over a (K, K, splits) ΔMSE array."""
    k = len(variable_names)
    verdicts = {}
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            pair = (variable_names[i], variable_names[j])
            verdicts[pair] = DeltaMseDecision(*pair, samples[i, j], alpha, alternative).decide()
    enforce_table_invariants(samples, verdicts, variable_names)
    return DeltaMseTable(variable_names, samples, verdicts, alpha, alternative)


# -----------------------------
# Detection
# -----------------------------

def detect_edges(data: LongitudinalDataset, cfg: DetectionConfig,
                 on_result: Optional[Callable[[SplitResult], None]] = None,
                 ) -> Tuple[DeltaMseTable, CausalGraph, List[SplitResult]]:
    cfg.validate()
    # canonical order: results must not depend on row order of the input
    data = data.subset(sorted(data.ids))
    if cfg.standardization == "global":
        data, standardizer = standardize(data)
        data = data.with_meta(standardizer=standardizer.to_dict())

    plan: SplitPlan = make_split_plan(data.ids, cfg.repetitions, cfg.seed)
    runner = SplitRunner(data, cfg.train, cfg.seed, cfg.standardization, cfg.workers,
                         cfg.keep_models, on_result)
    results = runner.run(plan)

    samples = np.stack([r.delta for r in results], axis=-1)
    table = build_table(samples, tuple(data.variable_names), cfg.alpha, cfg.alternative)

    for cause, effect in table.untestable():
        logger.warning("Pair %s->%s untestable: too few ΔMSE samples", cause, effect)
    logger.info("Detection: %s, table %s", verdict_summary(table.verdicts), table.signature()[:12])
    return table, table.candidate_graph(), results

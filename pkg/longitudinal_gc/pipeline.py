"""
End-to-end pipelines shared by the CLI commands and the experiment grid.

discovery: detection -> orientation -> pruning, optionally repeated over
several independent runs and aggregated by edge frequency.
"""

from __future__ import annotations

import copy
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from longitudinal_gc.data.dataset import LongitudinalDataset
from longitudinal_gc.engine.gc_engine import DeltaMseTable, DetectionConfig, detect_edges
from longitudinal_gc.engine.graph_ops import CausalGraph, aggregate_runs, orient_bidirectional, prune_indirect
from longitudinal_gc.engine.linear_gc import fit_and_test
from longitudinal_gc.engine.simgen import SimConfig, generate_dataset, resolve_graph
from longitudinal_gc.engine.split_runner import SplitResult
from longitudinal_gc.evaluation.metrics import result_row, score

logger = logging.getLogger(__name__)

METHODS = ("rnn_gc", "linear_gc")


def run_seed(seed: int, run: int) -> int:
    """Seed of run `run` in a multi-run discovery; run 0 keeps the base seed."""
    if run == 0:
        return seed
    return int(np.random.SeedSequence([seed, 1_000_003, run]).generate_state(1)[0] % (2**31))


@dataclass
class DiscoveryRun:
    seed: int
    table: DeltaMseTable
    candidate: CausalGraph
    graph: CausalGraph
    splits: List[SplitResult] = field(default_factory=list)


@dataclass
class DiscoveryOutcome:
    graph: CausalGraph
    runs: List[DiscoveryRun]

    @property
    def table(self) -> DeltaMseTable:
        return self.runs[0].table


def postprocess(candidate: CausalGraph, orient: bool = True, prune: bool = True,
                max_paths: int = 10_000) -> CausalGraph:
    graph = candidate
    if orient:
        graph = orient_bidirectional(graph)
    if prune:
        graph = prune_indirect(graph, max_paths)
    return graph


def run_discovery(data: LongitudinalDataset, settings: Mapping[str, Any], keep_models: bool = False,
                  on_result: Optional[Callable[[int, SplitResult], None]] = None) -> DiscoveryOutcome:
    post = settings["postprocess"]
    n_runs = settings["detection"].get("runs", 1)
    runs = []
    for r in range(n_runs):
        seed = run_seed(settings["seed"], r)
        cfg = DetectionConfig.from_settings({**settings, "seed": seed}, keep_models=keep_models)
        callback = (lambda res, _r=r: on_result(_r, res)) if on_result else None
        table, candidate, splits = detect_edges(data, cfg, callback)
        graph = postprocess(candidate, post["orient"], post["prune"], post["max_paths"])
        logger.info("Run %d/%d (seed %d): %d candidate edges, %d after post-processing",
                    r + 1, n_runs, seed, len(candidate.scores), len(graph.scores))
        runs.append(DiscoveryRun(seed, table, candidate, graph, splits))

    if n_runs == 1:
        return DiscoveryOutcome(runs[0].graph, runs)
    return DiscoveryOutcome(aggregate_runs([r.graph for r in runs], post["keep_threshold"]), runs)


def run_baseline(data: LongitudinalDataset, settings: Mapping[str, Any]) -> CausalGraph:
    b = settings["baseline"]
    return fit_and_test(data, b["lag_order"], b["alpha"], b["bivariate"], b["differencing"])


# -----------------------------
# Experiment grid
# -----------------------------

@dataclass(frozen=True)
class GridCell:
    graph: str
    sample_path: str
    lag: int
    noise_sigma: float
    missing_rate: float
    n_timepoints: int
    repetitions: int
    seed: int

    @property
    def dataset_id(self) -> str:
        return (f"{self.graph}-{self.sample_path}-lag{self.lag}-s{self.noise_sigma:g}"
                f"-m{self.missing_rate:g}-T{self.n_timepoints}-r{self.repetitions}-seed{self.seed}")


def _sigmas_for(noise_sigmas: Any, sample_path: str) -> List[float]:
    if isinstance(noise_sigmas, Mapping):
        return list(noise_sigmas.get(sample_path, []))
    return list(noise_sigmas)


def grid_cells(experiment: Mapping[str, Any]) -> Iterator[GridCell]:
    for graph, path in itertools.product(experiment["graphs"], experiment["sample_paths"]):
        for lag, sigma, rate, steps, reps, seed in itertools.product(
            experiment["lags"], _sigmas_for(experiment["noise_sigmas"], path), experiment["missing_rates"],
            experiment["timepoints"], experiment["repetitions"], experiment["seeds"],
        ):
            yield GridCell(graph, path, lag, sigma, rate, steps, reps, seed)


def cell_settings(settings: Mapping[str, Any], cell: GridCell) -> Dict[str, Any]:
    out = copy.deepcopy(dict(settings))
    out["seed"] = cell.seed
    out["detection"]["repetitions"] = cell.repetitions
    out["simulation"].update(graph=cell.graph, sample_path=cell.sample_path, lag=cell.lag,
                             noise_sigma=cell.noise_sigma, missing_rate=cell.missing_rate,
                             n_timepoints=cell.n_timepoints, seed=cell.seed)
    return out


def evaluate_cell(settings: Mapping[str, Any], cell: GridCell,
                  methods: Tuple[str, ...] = METHODS) -> List[Dict[str, Any]]:
    """One result row per method; a failing method yields a row with status 'failed: ...'."""
    local = cell_settings(settings, cell)
    base = {"graph": cell.graph, "sample_path": cell.sample_path, "lag": cell.lag,
            "noise_sigma": cell.noise_sigma, "missing_rate": cell.missing_rate,
            "timepoints": cell.n_timepoints, "repetitions": cell.repetitions, "seed": cell.seed}
    try:
        truth = resolve_graph(cell.graph)
        data, truth = generate_dataset(SimConfig.from_settings(local["simulation"]), truth)
    except Exception as exc:
        logger.error("Cell %s: simulation failed: %s", cell.dataset_id, exc)
        return [_failed_row(cell, m, base, exc) for m in methods]

    rows = []
    for method in methods:
        started = time.perf_counter()
        try:
            graph = run_discovery(data, local).graph if method == "rnn_gc" else run_baseline(data, local)
            result = score(graph, truth)
            rows.append({**result_row(cell.dataset_id, method, result, time.perf_counter() - started),
                         **base, "status": "ok"})
        except Exception as exc:
            logger.error("Cell %s, method %s failed: %s", cell.dataset_id, method, exc)
            rows.append(_failed_row(cell, method, base, exc))
    return rows


def _failed_row(cell: GridCell, method: str, base: Mapping[str, Any], exc: Exception) -> Dict[str, Any]:
    return {"dataset_id": cell.dataset_id, "method": method, "precision": math.nan, "recall": math.nan,
            "f1": math.nan, "runtime_seconds": math.nan, **base,
            "status": f"failed: {type(exc).__name__}: {exc}"}

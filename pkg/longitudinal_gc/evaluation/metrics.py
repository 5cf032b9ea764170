"""
Directed-edge scoring against a ground-truth graph

An edge counts only when it exists in truth with the same direction. A
predicted two-way pair over a one-way truth yields one correct and one
incorrect prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import pandas as pd

from longitudinal_gc.engine.graph_ops import CausalGraph
from longitudinal_gc.engine.simgen import GroundTruthGraph
from longitudinal_gc.errors import GraphError

Edge = Tuple[str, str]

RESULT_COLUMNS = ["dataset_id", "method", "precision", "recall", "f1", "runtime_seconds"]


@dataclass(frozen=True)
class EdgeOutcome:
    cause: str
    effect: str
    status: str  # correct | reversed | spurious | missed


@dataclass(frozen=True)
class EvaluationResult:
    precision: float
    recall: float
    f1: float
    ledger: Tuple[EdgeOutcome, ...] = field(default_factory=tuple)

    @property
    def counts(self) -> Dict[str, int]:
        out = {"correct": 0, "reversed": 0, "spurious": 0, "missed": 0}
        for item in self.ledger:
            out[item.status] += 1
        return out

    def ledger_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(o.cause, o.effect, o.status) for o in self.ledger],
                            columns=["cause", "effect", "status"])


def score(predicted: CausalGraph, truth: GroundTruthGraph) -> EvaluationResult:
    if set(predicted.nodes) != set(truth.nodes):
        raise GraphError(
            f"Node sets differ: predicted-only {sorted(set(predicted.nodes) - set(truth.nodes))}, "
            f"truth-only {sorted(set(truth.nodes) - set(predicted.nodes))}"
        )
    true_edges = set(truth.edges)
    ledger: List[EdgeOutcome] = []
    correct = 0
    for u, v in predicted.edges:
        if (u, v) in true_edges:
            correct += 1
            ledger.append(EdgeOutcome(u, v, "correct"))
        elif (v, u) in true_edges:
            ledger.append(EdgeOutcome(u, v, "reversed"))
        else:
            ledger.append(EdgeOutcome(u, v, "spurious"))
    for u, v in truth.edges:
        if (u, v) not in predicted.scores:
            ledger.append(EdgeOutcome(u, v, "missed"))

    n_pred = len(predicted.scores)
    if not n_pred and not true_edges:
        return EvaluationResult(1.0, 1.0, 1.0, tuple(ledger))
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / len(true_edges) if true_edges else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvaluationResult(precision, recall, f1, tuple(ledger))


def result_row(dataset_id: str, method: str, result: EvaluationResult, runtime: float) -> Dict[str, Any]:
    return {
        "dataset_id": dataset_id,
        "method": method,
        "precision": result.precision,
        "recall": result.recall,
        "f1": result.f1,
        "runtime_seconds": round(runtime, 3),
    }

"""
Repeated 5-fold cross-validation plan

Per repetition the sorted individual ids are shuffled with a seeded generator
and cut into 5 near-equal folds. Split k of a repetition tests on fold k,
validates on fold (k+1) mod 5 and trains on the remaining three.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from longitudinal_gc.errors import DataError

FOLDS = 5
# train : validation : test folds per split
SPLIT_RATIO = (FOLDS - 2, 1, 1)


@dataclass(frozen=True)
class Split:
    index: int
    repetition: int
    fold: int
    train_ids: Tuple[str, ...]
    val_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]


@dataclass(frozen=True)
class SplitPlan:
    repetitions: int
    seed: int
    assignments: Tuple[Tuple[Tuple[str, ...], ...], ...]
    folds: int = FOLDS

    def validate(self) -> None:
        if len(self.assignments) != self.repetitions:
            raise DataError("SplitPlan has a wrong number of repetitions")
        reference = None
        for rep, folds in enumerate(self.assignments):
            if len(folds) != self.folds:
                raise DataError(f"Repetition {rep} has {len(folds)} folds, expected {self.folds}")
            members = [i for fold in folds for i in fold]
            if len(members) != len(set(members)):
                raise DataError(f"Repetition {rep}: folds overlap")
            if reference is None:
                reference = set(members)
            elif set(members) != reference:
                raise DataError(f"Repetition {rep} covers a different set of individuals")

    @property
    def n_splits(self) -> int:
        return self.repetitions * self.folds

    @property
    def splits(self) -> List[Split]:
        out = []
        for rep, folds in enumerate(self.assignments):
            for k in range(self.folds):
                val = (k + 1) % self.folds
                train = tuple(i for j, fold in enumerate(folds) if j not in (k, val) for i in fold)
                out.append(Split(rep * self.folds + k, rep, k, train, folds[val], folds[k]))
        return out


def make_split_plan(ids: Sequence[str], repetitions: int = 4, seed: int = 0) -> SplitPlan:
    ordered = sorted(ids)
    if len(set(ordered)) != len(ordered):
        raise DataError("Individual ids must be unique")
    if len(ordered) < FOLDS:
        raise DataError(f"Need at least {FOLDS} individuals for cross-validation, got {len(ordered)}")
    if repetitions < 1:
        raise DataError("repetitions must be >= 1")

    assignments = []
    for rep in range(repetitions):
        rng = np.random.default_rng([seed, rep])
        shuffled = [ordered[i] for i in rng.permutation(len(ordered))]
        folds = np.array_split(np.arange(len(shuffled)), FOLDS)
        assignments.append(tuple(tuple(shuffled[i] for i in fold) for fold in folds))
    plan = SplitPlan(repetitions, seed, tuple(assignments))
    plan.validate()
    return plan


def split_seed(seed: int, split_index: int) -> int:
    """Training seed for one split, derived from (global seed, split index)."""
    return int(np.random.SeedSequence([seed, split_index]).generate_state(1)[0])


def reference_constants() -> Dict[str, Any]:
    return {"folds": FOLDS, "split_ratio": list(SPLIT_RATIO)}

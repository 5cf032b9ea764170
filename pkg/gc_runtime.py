"""
GC Runtime Enforcement Layer
Contract: DISCOVERY_CONTRACT_v1.0
Status: FROZEN_IMMUTABLE

This module enforces:
- ΔMSE sample validation
- One-sample t-test per ordered pair
- Degenerate-variance handling
- Untestable-pair semantics
- Table invariant preservation

No training logic. No graph logic.
Pure decision + enforcement.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Tuple
import hashlib
import math

import numpy as np
from scipy import stats

from longitudinal_gc.errors import InvariantBreach


ALTERNATIVES = ("greater", "two-sided")


# -----------------------------
# Pair Verdict
# -----------------------------

@dataclass(frozen=True)
class PairVerdict:
    cause: str
    effect: str
    n_samples: int
    n_missing: int
    mean: float
    t_statistic: float
    p_value: float
    testable: bool
    significant: bool

    def validate(self) -> None:
        if self.cause == self.effect:
            raise ValueError("PairVerdict on a self-pair")
        if self.n_samples < 0 or self.n_missing < 0:
            raise ValueError("PairVerdict sample counts must be non-negative")
        if self.testable:
            if not (0.0 <= self.p_value <= 1.0):
                raise ValueError("PairVerdict.p_value out of range")
            if math.isnan(self.t_statistic):
                raise ValueError("PairVerdict.t_statistic is NaN on a testable pair")
        elif self.significant:
            raise ValueError("Untestable pair cannot be significant")

    def signature(self) -> str:
        payload = (f"{self.cause}|{self.effect}|{self.n_samples}|{self.n_missing}|"
                   f"{self.mean:.12e}|{self.t_statistic:.12e}|{self.p_value:.12e}|{self.significant}")
        return hashlib.sha3_256(payload.encode("utf-8")).hexdigest()


# -----------------------------
# t-test
# -----------------------------

def one_sample_ttest(samples: Iterable[float], alternative: str = "greater") -> Tuple[float, float]:
    """t = mean / (sd / sqrt(n)) against zero; zero-variance samples are decided by sign."""
    if alternative not in ALTERNATIVES:
        raise ValueError(f"Unknown alternative {alternative!r}")
    a = np.asarray(list(samples), dtype=float)
    if a.size < 2:
        raise ValueError("t-test needs at least 2 samples")

    mean = float(np.mean(a))
    if np.ptp(a) == 0.0:
        if mean > 0:
            return math.inf, 0.0
        if mean < 0:
            return -math.inf, (1.0 if alternative == "greater" else 0.0)
        return 0.0, 1.0

    result = stats.ttest_1samp(a, 0.0, alternative=alternative)
    return float(result.statistic), float(result.pvalue)


# -----------------------------
# Decision Engine
# -----------------------------

class DeltaMseDecision:
    """Decides one ordered pair from its per-split ΔMSE samples (NaN = missing)."""

    def __init__(self, cause: str, effect: str, samples: Iterable[float],
                 alpha: float = 0.05, alternative: str = "greater"):
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        self.cause = cause
        self.effect = effect
        self.samples = np.asarray(list(samples), dtype=float)
        self.alpha = alpha
        self.alternative = alternative

    # ---- Aggregate Helpers ----

    def available(self) -> np.ndarray:
        return self.samples[~np.isnan(self.samples)]

    def n_missing(self) -> int:
        return int(np.isnan(self.samples).sum())

    # ---- Core Decision ----

    def decide(self) -> PairVerdict:
        available = self.available()
        missing = self.n_missing()

        # more than half the splits lost, or too few to estimate a variance
        if missing * 2 > self.samples.size or available.size < 2:
            return self._verdict(available, missing, math.nan, math.nan, testable=False)

        t, p = one_sample_ttest(available, self.alternative)
        return self._verdict(available, missing, t, p, testable=True)

    # ---- Verdict Packaging ----

    def _verdict(self, available: np.ndarray, missing: int, t: float, p: float,
                 testable: bool) -> PairVerdict:
        significant = bool(testable and p < self.alpha and t > 0)
        verdict = PairVerdict(
            cause=self.cause,
            effect=self.effect,
            n_samples=int(available.size),
            n_missing=missing,
            mean=float(np.mean(available)) if available.size else math.nan,
            t_statistic=t,
            p_value=p,
            testable=testable,
            significant=significant,
        )
        verdict.validate()
        return verdict


# -----------------------------
# Invariant Enforcement
# -----------------------------

def enforce_table_invariants(samples: np.ndarray, verdicts: Mapping[Tuple[str, str], PairVerdict],
                             variable_names: Tuple[str, ...]) -> None:
    k = len(variable_names)
    if samples.ndim != 3 or samples.shape[:2] != (k, k):
        raise InvariantBreach("Invariant breach: ΔMSE samples must be shaped (K, K, splits)")
    if not np.all(np.isnan(samples[np.arange(k), np.arange(k)])):
        raise InvariantBreach("Invariant breach: diagonal (self-pair) samples present")

    for (cause, effect), verdict in verdicts.items():
        verdict.validate()
        row = samples[variable_names.index(cause), variable_names.index(effect)]
        if verdict.n_samples + verdict.n_missing != row.size:
            raise InvariantBreach(
                f"Invariant breach: ({cause}, {effect}) has "
                f"{verdict.n_samples + verdict.n_missing} samples, expected {row.size}"
            )
        available = row[~np.isnan(row)]
        if verdict.testable and np.ptp(available) > 0 and not math.isfinite(verdict.t_statistic):
            raise InvariantBreach(f"Invariant breach: non-finite t for ({cause}, {effect}) with variance > 0")


def verdict_summary(verdicts: Mapping[Tuple[str, str], PairVerdict]) -> Dict[str, int]:
    return {
        "pairs": len(verdicts),
        "untestable": sum(1 for v in verdicts.values() if not v.testable),
        "significant": sum(1 for v in verdicts.values() if v.significant),
    }

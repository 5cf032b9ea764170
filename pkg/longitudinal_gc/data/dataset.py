"""
Longitudinal data model

Owns the per-individual representation, standardization and long-format CSV
I/O used by every other module.

Unobserved cells carry NaN. Consumers branch on `observed`, never on the
value itself.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from longitudinal_gc.errors import DataError

logger = logging.getLogger(__name__)

ID_COLUMN = "individual_id"
TIME_COLUMN = "time"


# -----------------------------
# Domain Types
# -----------------------------

@dataclass(frozen=True, eq=False)
class Individual:
    id: str
    times: np.ndarray
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float, ndmin=2)
        observed = np.array(self.observed, dtype=bool, ndmin=2)

        if times.size < 1:
            raise DataError(f"Individual {self.id!r} has no timepoints")
        if values.shape != observed.shape or values.shape[0] != times.size:
            raise DataError(
                f"Individual {self.id!r}: shape mismatch times={times.shape} "
                f"values={values.shape} observed={observed.shape}"
            )
        if np.any(np.diff(times) <= 0):
            raise DataError(f"Individual {self.id!r}: times must be strictly increasing")

        values[~observed] = np.nan
        for arr in (times, values, observed):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    @property
    def n_timepoints(self) -> int:
        return int(self.times.size)

    @property
    def n_variables(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    individuals: Tuple[Individual, ...]
    variable_names: Tuple[str, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "individuals", tuple(self.individuals))
        object.__setattr__(self, "variable_names", tuple(self.variable_names))
        self.validate()

    def validate(self) -> None:
        if len(set(self.variable_names)) != len(self.variable_names):
            raise DataError("Variable names must be unique")
        seen = set()
        k = len(self.variable_names)
        for ind in self.individuals:
            if ind.id in seen:
                raise DataError(f"Duplicate individual id {ind.id!r}")
            seen.add(ind.id)
            if ind.n_variables != k:
                raise DataError(
                    f"Individual {ind.id!r} has {ind.n_variables} variables, expected {k}"
                )

    # ---- Accessors ----

    @property
    def ids(self) -> List[str]:
        return [ind.id for ind in self.individuals]

    @property
    def n_variables(self) -> int:
        return len(self.variable_names)

    def index_of(self, variable: str) -> int:
        try:
            return self.variable_names.index(variable)
        except ValueError:
            raise DataError(f"Unknown variable {variable!r}") from None

    def subset(self, ids: Iterable[str]) -> "LongitudinalDataset":
        """Individuals in the order of `ids`."""
        lookup = {ind.id: ind for ind in self.individuals}
        try:
            chosen = tuple(lookup[i] for i in ids)
        except KeyError as exc:
            raise DataError(f"Unknown individual id {exc.args[0]!r}") from None
        return LongitudinalDataset(chosen, self.variable_names, dict(self.meta))

    def with_meta(self, **updates: Any) -> "LongitudinalDataset":
        return replace(self, meta={**self.meta, **updates})

    def observed_cells(self, variable_index: int) -> np.ndarray:
        parts = [ind.values[ind.observed[:, variable_index], variable_index]
                 for ind in self.individuals]
        return np.concatenate(parts) if parts else np.empty(0)

    def observed_fraction(self) -> float:
        total = sum(ind.observed.size for ind in self.individuals)
        hits = sum(int(ind.observed.sum()) for ind in self.individuals)
        return hits / total if total else 0.0


# -----------------------------
# Standardization
# -----------------------------

@dataclass(frozen=True)
class Standardizer:
    variable_names: Tuple[str, ...]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    degenerate: Tuple[str, ...] = ()

    def validate(self) -> None:
        if not (len(self.variable_names) == len(self.mean) == len(self.std)):
            raise DataError("Standardizer fields have inconsistent lengths")
        if any(not (s > 0.0) for s in self.std):
            raise DataError("Standardizer std must be strictly positive")

    def _columns(self, variable_names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        missing = [v for v in variable_names if v not in self.variable_names]
        if missing:
            raise DataError(f"Standardizer does not cover variables: {missing}")
        idx = [self.variable_names.index(v) for v in variable_names]
        return np.asarray(self.mean)[idx], np.asarray(self.std)[idx]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variable_names": list(self.variable_names),
            "mean": list(self.mean),
            "std": list(self.std),
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Standardizer":
        s = cls(
            variable_names=tuple(payload["variable_names"]),
            mean=tuple(float(m) for m in payload["mean"]),
            std=tuple(float(s) for s in payload["std"]),
            degenerate=tuple(payload.get("degenerate", ())),
        )
        s.validate()
        return s


def fit_standardizer(data: LongitudinalDataset, allow_unobserved: bool = False) -> Standardizer:
    """Per-variable mean/std over observed cells of all individuals.

    With `allow_unobserved`, a variable without observed cells gets mean 0, std 1
    and is flagged degenerate instead of raising.
    """
    means, stds, degenerate = [], [], []
    for k, name in enumerate(data.variable_names):
        cells = data.observed_cells(k)
        if cells.size == 0:
            if not allow_unobserved:
                raise DataError(f"Variable {name!r} has no observed cells")
            logger.warning("Variable %r has no observed cells; mean 0, std 1", name)
            means.append(0.0)
            stds.append(1.0)
            degenerate.append(name)
            continue
        mean = float(np.mean(cells))
        std = float(np.std(cells))
        if not std > 0.0:
            logger.warning("Variable %r has zero variance; std forced to 1", name)
            std = 1.0
            degenerate.append(name)
        means.append(mean)
        stds.append(std)
    return Standardizer(tuple(data.variable_names), tuple(means), tuple(stds), tuple(degenerate))


def _transform(data: LongitudinalDataset, s: Standardizer, inverse: bool) -> LongitudinalDataset:
    mean, std = s._columns(data.variable_names)
    out = []
    for ind in data.individuals:
        values = ind.values * std + mean if inverse else (ind.values - mean) / std
        out.append(Individual(ind.id, ind.times, values, ind.observed))
    return LongitudinalDataset(tuple(out), data.variable_names, dict(data.meta))


def apply_standardizer(data: LongitudinalDataset, s: Standardizer) -> LongitudinalDataset:
    return _transform(data, s, inverse=False)


def invert_standardizer(data: LongitudinalDataset, s: Standardizer) -> LongitudinalDataset:
    return _transform(data, s, inverse=True)


def standardize(data: LongitudinalDataset) -> Tuple[LongitudinalDataset, Standardizer]:
    s = fit_standardizer(data)
    return apply_standardizer(data, s), s


# -----------------------------
# CSV + Metadata I/O
# -----------------------------

def meta_path_for(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.meta.json")


def load_csv(path: Path | str) -> LongitudinalDataset:
    """Read long-format CSV: `individual_id,time,<var1>,...`; empty cell = missing."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"Cannot read {path}: {exc}") from exc

    columns = [c.strip() for c in frame.columns]
    if columns[:2] != [ID_COLUMN, TIME_COLUMN] or len(columns) < 3:
        raise DataError(
            f"{path}: header must start with '{ID_COLUMN},{TIME_COLUMN}' followed by variables"
        )
    frame.columns = columns
    variables = columns[2:]
    frame = frame.apply(lambda col: col.str.strip())

    # CSV row numbers: header is row 1
    row_numbers = np.arange(len(frame)) + 2
    numeric = {}
    for col in [TIME_COLUMN, *variables]:
        raw = frame[col]
        parsed = pd.to_numeric(raw.where(raw != "", None), errors="coerce")
        bad = (raw != "") & parsed.isna()
        if col == TIME_COLUMN:
            bad |= raw == ""
        if bad.any():
            first = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(
                f"{path}: row {row_numbers[first]}: non-numeric value {raw.iloc[first]!r} "
                f"in column {col!r}"
            )
        column = parsed.to_numpy(dtype=float)
        infinite = (raw != "").to_numpy() & np.isinf(column)
        if infinite.any():
            first = int(np.flatnonzero(infinite)[0])
            raise DataError(
                f"{path}: row {row_numbers[first]}: non-finite value {raw.iloc[first]!r} "
                f"in column {col!r}"
            )
        numeric[col] = column

    ids = frame[ID_COLUMN].to_numpy()
    keys = pd.DataFrame({ID_COLUMN: ids, TIME_COLUMN: numeric[TIME_COLUMN]})
    dupes = keys.duplicated(keep="first").to_numpy()
    if dupes.any():
        first = int(np.flatnonzero(dupes)[0])
        raise DataError(
            f"{path}: row {row_numbers[first]}: duplicate (individual, time) pair "
            f"({ids[first]}, {numeric[TIME_COLUMN][first]})"
        )

    values = np.column_stack([numeric[v] for v in variables])
    individuals = []
    for ind_id in pd.unique(ids):
        rows = np.flatnonzero(ids == ind_id)
        order = rows[np.argsort(numeric[TIME_COLUMN][rows], kind="stable")]
        block = values[order]
        individuals.append(Individual(
            id=str(ind_id),
            times=numeric[TIME_COLUMN][order],
            values=block,
            observed=~np.isnan(block),
        ))

    meta: Dict[str, Any] = {}
    sidecar = meta_path_for(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as f:
            meta = json.load(f)
    logger.debug("Loaded %d individuals x %d variables from %s", len(individuals), len(variables), path)
    return LongitudinalDataset(tuple(individuals), tuple(variables), meta)


def to_long_frame(data: LongitudinalDataset) -> pd.DataFrame:
    rows = []
    for ind in data.individuals:
        for t in range(ind.n_timepoints):
            rows.append([ind.id, ind.times[t], *ind.values[t]])
    return pd.DataFrame(rows, columns=[ID_COLUMN, TIME_COLUMN, *data.variable_names])


def save_csv(data: LongitudinalDataset, path: Path | str, write_meta: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = to_long_frame(data)
    frame.to_csv(path, index=False, na_rep="", encoding="utf-8", lineterminator="\n")
    if write_meta:
        with open(meta_path_for(path), "w", encoding="utf-8") as f:
            json.dump(data.meta, f, indent=2, sort_keys=True)
            f.write("\n")
    return path

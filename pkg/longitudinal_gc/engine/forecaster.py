"""
Multi-task recurrent next-step forecaster

One GRU cell over all variables. At step t the input vector is assembled per
cell: observed and not withheld -> observed value; otherwise the model's own
forecast of that variable made at step t-1 (zero at t=0). Prediction row t is
the forecast for timepoint t+1.

Training augments every mini-batch with a copy in which one uniformly drawn
variable is withheld for the whole sequence, so the same network serves as
both the full-history and the restricted-history predictor.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from longitudinal_gc.data.dataset import Individual, LongitudinalDataset, Standardizer
from longitudinal_gc.errors import ConfigError, DataError, MissingTargetError, TrainingDivergence
from longitudinal_gc.settings import config_digest

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lgc-forecaster/1"
IMPUTATION_MODES = ("self", "zero_mask")
DTYPES = {"float32": torch.float32, "float64": torch.float64}


# -----------------------------
# Config + Mask
# -----------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    hidden_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 64
    imputation: str = "self"
    dtype: str = "float32"
    seed: int = 0

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.hidden_size < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("hidden_size, batch_size and max_epochs must be >= 1")
        if self.imputation not in IMPUTATION_MODES:
            raise ConfigError(f"imputation must be one of {IMPUTATION_MODES}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), "seed": int(seed)})

    @classmethod
    def from_settings(cls, section: Mapping[str, Any], seed: int = 0) -> "TrainConfig":
        fields = {k: section[k] for k in cls.__dataclass_fields__ if k in section}
        cfg = cls(**{**fields, "seed": seed})
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class MaskSpec:
    """Variable indices withheld from the input for an entire sequence."""
    withheld: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "withheld", frozenset(int(i) for i in self.withheld))

    def validate(self, n_variables: int) -> None:
        if any(i < 0 or i >= n_variables for i in self.withheld):
            raise DataError(f"Mask {sorted(self.withheld)} references unknown variables")
        if len(self.withheld) >= n_variables:
            raise DataError("Mask may not withhold every variable")

    def as_tensor(self, batch_size: int, n_variables: int) -> torch.Tensor:
        row = torch.zeros(n_variables, dtype=torch.bool)
        if self.withheld:
            row[sorted(self.withheld)] = True
        return row.expand(batch_size, n_variables).clone()

    @classmethod
    def none(cls) -> "MaskSpec":
        return cls(frozenset())

    @classmethod
    def of(cls, *indices: int) -> "MaskSpec":
        return cls(frozenset(indices))


# -----------------------------
# Network
# -----------------------------

class GRUForecaster(nn.Module):
    def __init__(self, n_variables: int, hidden_size: int, imputation: str = "self"):
        super().__init__()
        if imputation not in IMPUTATION_MODES:
            raise ConfigError(f"imputation must be one of {IMPUTATION_MODES}")
        self.n_variables = n_variables
        self.hidden_size = hidden_size
        self.imputation = imputation
        input_size = n_variables * (2 if imputation == "zero_mask" else 1)
        self.cell = nn.GRUCell(input_size, hidden_size)
        self.readout = nn.Linear(hidden_size, n_variables)

    def forward(self, values: torch.Tensor, observed: torch.Tensor,
                withheld: torch.Tensor) -> torch.Tensor:
        # values, observed: [batch, steps, variables]; withheld: [batch, variables]
        batch, steps, _ = values.shape
        h = values.new_zeros(batch, self.hidden_size)
        forecast = values.new_zeros(batch, self.n_variables)
        outputs = []
        for t in range(steps):
            use = observed[:, t] & ~withheld
            if self.imputation == "self":
                x = torch.where(use, values[:, t], forecast)
            else:
                x = torch.cat([torch.where(use, values[:, t], torch.zeros_like(forecast)),
                               use.to(values.dtype)], dim=-1)
            h = self.cell(x, h)
            forecast = self.readout(h)
            outputs.append(forecast)
        return torch.stack(outputs, dim=1)


@dataclass(frozen=True, eq=False)
class SequenceBatch:
    values: torch.Tensor
    observed: torch.Tensor

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def take(self, index: np.ndarray) -> "SequenceBatch":
        idx = torch.as_tensor(index, dtype=torch.long)
        return SequenceBatch(self.values[idx], self.observed[idx])


def make_batch(individuals: Sequence[Individual], dtype: torch.dtype = torch.float32) -> SequenceBatch:
    """Pad to the longest sequence; padded steps are unobserved."""
    if not individuals:
        raise DataError("Cannot batch an empty set of individuals")
    steps = max(ind.n_timepoints for ind in individuals)
    k = individuals[0].n_variables
    values = np.zeros((len(individuals), steps, k))
    observed = np.zeros((len(individuals), steps, k), dtype=bool)
    for i, ind in enumerate(individuals):
        values[i, :ind.n_timepoints] = np.where(ind.observed, ind.values, 0.0)
        observed[i, :ind.n_timepoints] = ind.observed
    return SequenceBatch(torch.as_tensor(values, dtype=dtype), torch.as_tensor(observed))


def loss_on_batch(network: GRUForecaster, batch: SequenceBatch, withheld: torch.Tensor) -> torch.Tensor:
    """Mean squared next-step error over observed targets at t >= 1."""
    preds = network(batch.values, batch.observed, withheld)
    target_mask = batch.observed[:, 1:]
    err = torch.where(target_mask, preds[:, :-1] - batch.values[:, 1:], torch.zeros_like(preds[:, :-1]))
    count = target_mask.sum().clamp(min=1)
    return (err ** 2).sum() / count


# -----------------------------
# Trained Model
# -----------------------------

@dataclass(eq=False)
class ForecastModel:
    network: GRUForecaster
    variable_names: Tuple[str, ...]
    config: TrainConfig
    standardizer: Optional[Standardizer] = None
    best_val_loss: float = math.nan
    epochs_run: int = 0

    @property
    def hidden_size(self) -> int:
        return self.network.hidden_size

    @property
    def n_variables(self) -> int:
        return len(self.variable_names)

    def parameters_finite(self) -> bool:
        return all(bool(torch.isfinite(p).all()) for p in self.network.parameters())


def _check_variables(model: ForecastModel, data_variables: Sequence[str]) -> None:
    if tuple(data_variables) != model.variable_names:
        raise DataError(
            f"Variable mismatch: model has {len(model.variable_names)} {list(model.variable_names)}, "
            f"data has {len(data_variables)} {list(data_variables)}"
        )


def _predict_batch(model: ForecastModel, batch: SequenceBatch, mask: MaskSpec) -> np.ndarray:
    mask.validate(model.n_variables)
    withheld = mask.as_tensor(batch.size, model.n_variables)
    with torch.no_grad():
        preds = model.network(batch.values, batch.observed, withheld)
    return preds.detach().cpu().numpy().astype(float)


def forward_sequence(model: ForecastModel, individual: Individual, mask: MaskSpec) -> np.ndarray:
    """Predictions [timepoint, variable]; row t forecasts timepoint t+1."""
    if individual.n_variables != model.n_variables:
        raise DataError(
            f"Individual {individual.id!r} has {individual.n_variables} variables, "
            f"model expects {model.n_variables}"
        )
    batch = make_batch([individual], model.config.torch_dtype)
    return _predict_batch(model, batch, mask)[0]


def squared_errors_by_variable(model: ForecastModel, data: LongitudinalDataset,
                               mask: MaskSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Per-variable sum of squared next-step errors and observed-target counts."""
    _check_variables(model, data.variable_names)
    batch = make_batch(data.individuals, model.config.torch_dtype)
    preds = _predict_batch(model, batch, mask)[:, :-1]
    targets = batch.values.numpy().astype(float)[:, 1:]
    observed = batch.observed.numpy()[:, 1:]
    sq = np.where(observed, (preds - targets) ** 2, 0.0)
    return sq.sum(axis=(0, 1)), observed.sum(axis=(0, 1))


def mse_by_variable(model: ForecastModel, data: LongitudinalDataset, mask: MaskSpec) -> np.ndarray:
    """MSE per target variable; NaN where a variable has no observed targets."""
    sse, counts = squared_errors_by_variable(model, data, mask)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sse / np.maximum(counts, 1), np.nan)


def evaluate_mse(model: ForecastModel, test: LongitudinalDataset, target: str, mask: MaskSpec) -> float:
    k = model.variable_names.index(target) if target in model.variable_names else None
    if k is None:
        raise DataError(f"Unknown target variable {target!r}")
    sse, counts = squared_errors_by_variable(model, test, mask)
    if counts[k] == 0:
        raise MissingTargetError(f"No observed cells of {target!r} at t >= 1 in the test split")
    return float(sse[k] / counts[k])


# -----------------------------
# Training
# -----------------------------

def build_network(n_variables: int, cfg: TrainConfig) -> GRUForecaster:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        network = GRUForecaster(n_variables, cfg.hidden_size, cfg.imputation)
    return network.to(cfg.torch_dtype)


def _dropout_copies(batch: SequenceBatch, n_variables: int,
                    rng: np.random.Generator) -> Tuple[SequenceBatch, torch.Tensor]:
    """Unmasked copy plus a copy with one uniformly drawn variable withheld per sequence."""
    full = torch.zeros(batch.size, n_variables, dtype=torch.bool)
    if n_variables < 2:
        return batch, full
    dropped = torch.zeros(batch.size, n_variables, dtype=torch.bool)
    dropped[torch.arange(batch.size), torch.as_tensor(rng.integers(0, n_variables, size=batch.size))] = True
    augmented = SequenceBatch(torch.cat([batch.values, batch.values]),
                              torch.cat([batch.observed, batch.observed]))
    return augmented, torch.cat([full, dropped])


def _validation_loss(network: GRUForecaster, batch: SequenceBatch, n_variables: int) -> float:
    with torch.no_grad():
        return float(loss_on_batch(network, batch, torch.zeros(batch.size, n_variables, dtype=torch.bool)))


def train(data: LongitudinalDataset, val: LongitudinalDataset, cfg: TrainConfig,
          standardizer: Optional[Standardizer] = None) -> ForecastModel:
    """Adam on masked L2 loss; returns the snapshot with the best validation loss."""
    cfg.validate()
    if not data.individuals:
        raise DataError("Empty training split")
    if not val.individuals:
        raise DataError("Empty validation split")
    overlap = set(data.ids) & set(val.ids)
    if overlap:
        raise DataError(f"Training and validation splits share individuals: {sorted(overlap)[:5]}")
    if tuple(val.variable_names) != tuple(data.variable_names):
        raise DataError("Training and validation splits have different variables")

    k = data.n_variables
    network = build_network(k, cfg)
    optimizer = torch.optim.Adam(network.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)

    train_batch = make_batch(data.individuals, cfg.torch_dtype)
    val_batch = make_batch(val.individuals, cfg.torch_dtype)

    best_loss = _validation_loss(network, val_batch, k)
    best_state = copy.deepcopy(network.state_dict())
    stale = 0
    epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        network.train()
        order = rng.permutation(train_batch.size)
        for start in range(0, train_batch.size, cfg.batch_size):
            chunk, withheld = _dropout_copies(train_batch.take(order[start:start + cfg.batch_size]), k, rng)
            optimizer.zero_grad()
            loss = loss_on_batch(network, chunk, withheld)
            if not torch.isfinite(loss):
                raise TrainingDivergence(f"Non-finite training loss at epoch {epoch} (seed {cfg.seed})")
            loss.backward()
            optimizer.step()
            if not all(bool(torch.isfinite(p).all()) for p in network.parameters()):
                raise TrainingDivergence(f"Non-finite parameters after a step at epoch {epoch}")

        network.eval()
        val_loss = _validation_loss(network, val_batch, k)
        if not math.isfinite(val_loss):
            raise TrainingDivergence(f"Non-finite validation loss at epoch {epoch}")
        logger.debug("epoch %d: val_loss=%.6f", epoch, val_loss)

        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(network.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    network.load_state_dict(best_state)
    network.eval()
    network.requires_grad_(False)
    logger.info("Forecaster trained: %d epochs, best val loss %.6f (seed %d)", epoch, best_loss, cfg.seed)
    return ForecastModel(network, tuple(data.variable_names), cfg, standardizer, best_loss, epoch)


# -----------------------------
# Checkpoints
# -----------------------------

def save_checkpoint(model: ForecastModel, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = {
        name: {
            "shape": list(t.shape),
            "dtype": str(t.dtype).replace("torch.", ""),
            "data": [float(x) for x in t.detach().cpu().reshape(-1).tolist()],
        }
        for name, t in model.network.state_dict().items()
    }
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "config_digest": config_digest(model.config.to_dict()),
        "variable_names": list(model.variable_names),
        "hidden_size": model.hidden_size,
        "standardizer": model.standardizer.to_dict() if model.standardizer else None,
        "best_val_loss": model.best_val_loss,
        "epochs_run": model.epochs_run,
        "tensors": tensors,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    return path


def load_checkpoint(path: Path | str) -> ForecastModel:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a forecaster checkpoint")
    cfg = TrainConfig(**payload["config"])
    if config_digest(cfg.to_dict()) != payload["config_digest"]:
        raise DataError(f"{path}: config digest mismatch")

    network = GRUForecaster(len(payload["variable_names"]), payload["hidden_size"], cfg.imputation)
    network = network.to(cfg.torch_dtype)
    state = {
        name: torch.tensor(entry["data"], dtype=DTYPES[entry["dtype"]]).reshape(entry["shape"])
        for name, entry in payload["tensors"].items()
    }
    network.load_state_dict(state)
    network.eval()
    network.requires_grad_(False)
    standardizer = Standardizer.from_dict(payload["standardizer"]) if payload["standardizer"] else None
    return ForecastModel(network, tuple(payload["variable_names"]), cfg, standardizer,
                         float(payload["best_val_loss"]), int(payload["epochs_run"]))

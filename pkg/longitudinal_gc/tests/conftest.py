import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

import numpy as np
import pytest

from longitudinal_gc.engine.forecaster import TrainConfig
from longitudinal_gc.engine.simgen import SimConfig, generate_dataset


@pytest.fixture
def tiny_train_config():
    return TrainConfig(learning_rate=3e-3, hidden_size=8, max_epochs=3, patience=2, batch_size=16, seed=0)


@pytest.fixture
def chain3_data():
    data, truth = generate_dataset(SimConfig(graph="chain3", n_individuals=40, n_timepoints=6, seed=3))
    return data, truth


@pytest.fixture(autouse=True)
def _no_env_overlay(monkeypatch):
    monkeypatch.delenv("LGC_ENV", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fixtwin", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fixtwin")

DATA = Path(__file__).resolve().parents[1] / "src" / "fixtwin" / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def fixation_toml() -> Path:
    return DATA / "fixation_default.toml"


@pytest.fixture(scope="session")
def heat_toml() -> Path:
    return DATA / "heat_estimator.toml"


@pytest.fixture(scope="session")
def double_neumann_toml() -> Path:
    return DATA / "double_neumann.toml"

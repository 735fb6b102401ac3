"""Shared fixtures."""

from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from src.diffusion.schedule import Schedule, make_cosine, make_schedule
from src.diffusion.target import Dataset, GaussianComponent, GmmTarget, default_target, sample


@pytest.fixture
def cosine_schedule() -> Schedule:
    return make_cosine(100, 0.008)


@pytest.fixture
def linear_schedule() -> Schedule:
    return make_schedule("linear", 100)


@pytest.fixture
def short_schedule() -> Schedule:
    return make_cosine(5, 0.008)


@pytest.fixture
def target() -> GmmTarget:
    return default_target()


@pytest.fixture
def standard_target() -> GmmTarget:
    """One standard-normal component centred at the origin."""
    return GmmTarget((GaussianComponent(1.0, (0.0, 0.0), (1.0, 1.0)),))


@pytest.fixture
def small_dataset(target: GmmTarget) -> Dataset:
    return sample(target, 256, seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def run_dir(tmp_path: Path) -> Path:
    directory = tmp_path / "runs"
    directory.mkdir()
    return directory


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()

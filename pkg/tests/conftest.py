import numpy as np
import pytest

from faceveil.backends import ToyAttributeScorer, ToyCodec
from faceveil.schedule import build_schedule, plan_timesteps


@pytest.fixture(scope="session")
def default_schedule():
    return build_schedule(1000, 0.00085, 0.012)


@pytest.fixture(scope="session")
def default_plan(default_schedule):
    return plan_timesteps(default_schedule, 45, 1.0)


@pytest.fixture
def codec():
    return ToyCodec()


@pytest.fixture
def scorer(codec):
    return ToyAttributeScorer(codec=codec)


@pytest.fixture(scope="session")
def make_image():
    """Factory for seeded images in [-1, 1]."""

    def _make(seed: int, shape=(8, 8), scale: float = 0.4) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.clip(rng.standard_normal(shape) * scale, -1.0, 1.0)

    return _make

"""
Shared fixtures for the test suite.
"""
import numpy as np
import pytest
from click.testing import CliRunner

from app.config import get_settings
from app.services.dist import Distribution, make_explicit, make_uniform


def random_distributions(count: int, max_k: int, seed: int) -> list[Distribution]:
    """Seeded random distributions: Dirichlet(1) vectors, some with sparse supports."""
    rng = np.random.default_rng(seed)
    distributions = []
    for index in range(count):
        k = int(rng.integers(1, max_k + 1))
        probs = rng.dirichlet(np.ones(k))
        if index % 5 == 0 and k > 2:
            probs[rng.random(k) < 0.3] = 0.0
            if probs.sum() == 0:
                probs[0] = 1.0
            probs = probs / probs.sum()
        distributions.append(make_explicit(probs))
    return distributions


@pytest.fixture
def settings():
    return get_settings()


@pytest.fixture
def uniform2() -> Distribution:
    return make_uniform(2)


@pytest.fixture
def point_mass() -> Distribution:
    return make_uniform(1)


@pytest.fixture(scope="session")
def small_distributions() -> list[Distribution]:
    """100 seeded distributions with k <= 50."""
    return random_distributions(100, 50, seed=20240601)


@pytest.fixture(scope="session")
def bias_distributions() -> list[Distribution]:
    """200 seeded distributions with k <= 100."""
    return random_distributions(200, 100, seed=7)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()

import numpy as np
import pytest

from global_motion_tools.body import BodySkeleton, default_skeleton

from tests.utils import tiny_dataset


def pytest_configure(config: pytest.Config) -> None:
    """Register custom markers."""
    config.addinivalue_line("markers", "slow: marks training experiments that take minutes")
    config.addinivalue_line("markers", "integration: marks end-to-end command-line runs")


@pytest.fixture(scope="session")
def skel() -> BodySkeleton:
    """The default skeleton, shared by every test."""
    return default_skeleton()


@pytest.fixture
def rng() -> np.random.Generator:
    """A fixed-seed generator."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def walk_samples() -> list:
    """A handful of short walking windows."""
    return tiny_dataset(sequences=3, window=8, stride=8, seed=7)

import numpy as np
import pytest

from pointcarve import BoundingRange, PointCloud


@pytest.fixture
def unit_range() -> BoundingRange:
    return BoundingRange(np.zeros(3), np.ones(3))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_cloud(rng: np.random.Generator, n: int, lo=0.0, hi=1.0) -> PointCloud:
    return PointCloud(rng.uniform(lo, hi, size=(n, 3)))

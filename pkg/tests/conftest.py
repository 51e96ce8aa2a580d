import numpy as np
import pytest

from ldpmean import RandomStream


def random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture
def root() -> RandomStream:
    return RandomStream(20250811)

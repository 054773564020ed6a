import numpy as np
import pytest

from moorient.instances import generate_instance


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def small_mixed():
    # 10 cities, one profit criterion, mixed-type layout
    return generate_instance(10, 1, 2.0, seed=99)


@pytest.fixture(scope="session")
def mid_mixed():
    return generate_instance(50, 1, 3.0, seed=42)

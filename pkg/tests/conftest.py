import numpy as np
import pytest

from slicedsteer.gaussian_steering import benchmark_problem, integrate_covariance
from slicedsteer.sliced_core import sample_directions


@pytest.fixture(scope="session")
def problem():
    return benchmark_problem()


@pytest.fixture(scope="session")
def dirs512():
    return sample_directions(2, 512, "deterministic-angular")


@pytest.fixture(scope="session")
def flow(problem, dirs512):
    return integrate_covariance(problem, dirs512, steps=4000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

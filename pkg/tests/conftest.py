import numpy as np
import pytest

from risdet.signal_model import SteeringSet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_steering(n: int, theta_r_deg: float = 0.5,
                  theta_s_deg: float = -0.4) -> SteeringSet:
    return SteeringSet.from_angles(theta_r_deg, theta_s_deg, n)


@pytest.fixture
def steering16():
    return make_steering(16)


@pytest.fixture
def steering4():
    return make_steering(4)

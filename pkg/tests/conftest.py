import math
import warnings

import numpy as np
import pytest

from ncentre import validate_config
from ncentre.model import HypothesisWarning

S3 = math.sqrt(3.0)
# unit side, centroid at the origin
TRIANGLE = [[1.0 / S3, 0.0], [-0.5 / S3, 0.5], [-0.5 / S3, -0.5]]


def quiet_config(centres, strengths, dim):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        return validate_config(centres, strengths, dim)


@pytest.fixture(scope="session")
def kepler1():
    return validate_config([[0.0, 0.0]], [1.0], 2)


@pytest.fixture(scope="session")
def triangle():
    return validate_config(TRIANGLE, [1.0, 1.0, 1.0], 2)


@pytest.fixture(scope="session")
def euler2():
    return validate_config([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0], 2)


@pytest.fixture(scope="session")
def collinear3():
    return quiet_config([[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.5, 0.0, 0.0]],
                        [1.0, 0.7, 1.2], 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from foliated_dynamics.cocycle import Representation
from foliated_dynamics.surface_group import preset


@pytest.fixture(scope="session")
def genus2():
    return preset("genus2")


@pytest.fixture(scope="session")
def torus():
    return preset("punctured_torus")


@pytest.fixture(scope="session")
def inclusion(genus2):
    return Representation.inclusion(genus2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_frame_matrix(rng, spread=1.5):
    """Random unit-determinant matrix with entries of moderate size."""
    from foliated_dynamics.hyperbolic import frame_from

    z = complex(rng.normal(scale=spread), np.exp(rng.normal(scale=0.7)))
    return frame_from(z, rng.uniform(0, 2 * np.pi))

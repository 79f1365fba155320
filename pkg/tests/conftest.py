import numpy as np
import pytest

from localkernels.manifolds import PointCloud, generate_ellipse, generate_embedded_torus_r3, generate_flat_torus_r4


@pytest.fixture(scope="session")
def circle_2000():
    return generate_ellipse(2000, 1.0)


@pytest.fixture(scope="session")
def circle_200():
    return generate_ellipse(200, 1.0)


@pytest.fixture(scope="session")
def flat_torus_20():
    return generate_flat_torus_r4(20)


@pytest.fixture(scope="session")
def torus_r3_14():
    # 196 points: the 200-point scale used by the structural suite.
    return generate_embedded_torus_r3(14, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_cloud(n=200, dim=3, seed=0):
    x = np.random.default_rng(seed).normal(size=(n, dim))
    return PointCloud(x)

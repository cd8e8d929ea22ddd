import numpy as np
import pytest

from npnp.bench import gen_scene, random_spec
from npnp.sos import monomial_values, sos_system


def make_scene(n=12, noise=0.0, seed=0):
    """(correspondences, dataset) for a seeded synthetic scene."""
    data = gen_scene(random_spec(n, noise=noise, seed=seed))
    return data.correspondences(), data


def random_feasible_y(rng, system, weight=None):
    """Strictly feasible dual point: a mix of the analytic center and a point mass."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    point = -monomial_values(q, system.basis.deg4)
    w = rng.uniform(0.05, 0.9) if weight is None else weight
    return (1.0 - w) * np.asarray(system.analytic_center) + w * point


@pytest.fixture(scope="session")
def system():
    return sos_system()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

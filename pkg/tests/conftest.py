import numpy as np
import pytest
from scipy.special import expit

from gbcee.data import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def confounded_binary(n, rng, beta=1.0, outcome="continuous"):
    """One confounder U1 of X and Y, one pure outcome predictor U2, one instrument U3."""
    U = rng.standard_normal((n, 3))
    x = (rng.random(n) < expit(0.8 * U[:, 0] + 0.8 * U[:, 2])).astype(float)
    eta = beta * x + 0.7 * U[:, 0] + 0.5 * U[:, 1]
    if outcome == "binary":
        y = (rng.random(n) < expit(eta - 0.5)).astype(float)
    else:
        y = eta + rng.standard_normal(n)
    return Dataset(y, x, U, outcome, "binary")


@pytest.fixture
def small_data(rng):
    return confounded_binary(400, rng)

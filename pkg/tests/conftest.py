import numpy as np
import pytest
from scipy.special import expit

from tbfsel import make_dataset


def simulate_logistic(n, beta, seed, intercept=-0.5):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.standard_normal((n, beta.size))
    y = (rng.random(n) < expit(intercept + X @ beta)).astype(float)
    return make_dataset(y=y, X=X, family="binomial")


def simulate_gaussian(n, beta, seed, sigma=1.0, intercept=1.0):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.standard_normal((n, beta.size))
    y = intercept + X @ beta + sigma * rng.standard_normal(n)
    return make_dataset(y=y, X=X, family="gaussian")


def simulate_cox(n, beta, seed, censor_rate=1.0):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.standard_normal((n, beta.size))
    hazard = np.exp(X @ beta)
    event_time = rng.exponential(1.0 / hazard)
    censor_time = rng.exponential(censor_rate, n)
    y = np.minimum(event_time, censor_time)
    status = (event_time <= censor_time).astype(float)
    if status.sum() < 1:
        status[np.argmin(y)] = 1.0
    return make_dataset(y=y, X=X, family="cox", status=status)


@pytest.fixture
def logistic_ds():
    return simulate_logistic(400, [0.8, -0.5, 0.0], seed=7)


@pytest.fixture
def gaussian_ds():
    return simulate_gaussian(200, [0.6, 0.0, -0.4], seed=11)

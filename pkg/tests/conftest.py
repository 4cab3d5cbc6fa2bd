import numpy as np
import pytest

from flmarket import estimator as est


def central_difference(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def make_history(theta_star, num_records, rng, feature_scale=1.0):
    """Won records labeled by a known parameter vector."""
    records = []
    for _ in range(num_records):
        q = np.array([1.0, rng.uniform(0, feature_scale), rng.uniform(0, feature_scale)])
        records.append(
            est.HistoryRecord(
                features=q,
                bid=0.5,
                won=True,
                clearing_price=0.5,
                realized_utility=est.predict(np.asarray(theta_star, dtype=float), q),
            )
        )
    return records


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

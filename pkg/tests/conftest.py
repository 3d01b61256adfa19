import numpy as np
import pytest

from kmeans_pd.gap import make_pentagons
from kmeans_pd.geometry import random_instance

STYLES = ("uniform", "blobs", "grid")


@pytest.fixture
def pentagons():
    return make_pentagons(1)


@pytest.fixture
def line4():
    return np.array([[0.0], [1.0], [2.0], [3.0]])


def sweep_instances(seed, count, max_n, max_dim=3, max_t=2, lam_range=(-3, 3), max_k=1):
    """Seeded stream of (instance, t, lambda) covering all instance styles."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(1, max_n + 1))
        dim = int(rng.integers(1, max_dim + 1))
        t = int(rng.integers(1, max_t + 1))
        lam = float(10 ** rng.uniform(*lam_range))
        k = int(rng.integers(1, max_k + 1))
        yield random_instance(rng, n, dim, k, style=STYLES[i % 3]), t, lam

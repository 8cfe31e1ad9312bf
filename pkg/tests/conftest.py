import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diffdsep.graph import BinaryDag

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_dag(rng, d, p=0.4):
    order = rng.permutation(d)
    upper = np.triu(rng.random((d, d)) < p, k=1)
    adj = np.zeros((d, d), dtype=np.int8)
    adj[np.ix_(order, order)] = upper
    return BinaryDag(adj)


def chain_dag(d):
    adj = np.zeros((d, d), dtype=np.int8)
    for i in range(d - 1):
        adj[i, i + 1] = 1
    return BinaryDag(adj)


def dag_from_edges(d, edges):
    adj = np.zeros((d, d), dtype=np.int8)
    for u, v in edges:
        adj[u, v] = 1
    return BinaryDag(adj)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

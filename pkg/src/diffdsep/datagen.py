"""Synthetic binary Bayesian-network benchmarks.

Random DAGs come from an Erdos-Renyi model over a random node order or from
Barabasi-Albert preferential attachment oriented along a random permutation.
Conditional probability tables are drawn uniformly from [0.2, 0.8] and data
are produced by ancestral sampling.

All randomness goes through ``numpy.random.default_rng`` (PCG64), so a seed and
the parameters fully determine every output on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .citests import Dataset
from .graph import BinaryDag, topological_order

CPT_LOW, CPT_HIGH = 0.2, 0.8
MAX_PARENTS = 20


def gen_er_dag(d: int, ratio: float, seed=None) -> BinaryDag:
    """Each forward pair of a random node order is an edge with probability ``min(1, r/d)``."""
    if d < 2:
        raise ValueError("need at least two nodes")
    if ratio <= 0:
        raise ValueError("edge ratio must be positive")
    rng = np.random.default_rng(seed)
    order = rng.permutation(d)
    p = min(1.0, ratio / d)
    upper = np.triu(rng.random((d, d)) < p, k=1)
    adj = np.zeros((d, d), dtype=np.int8)
    adj[np.ix_(order, order)] = upper
    return BinaryDag(adj)


def ba_edges(d: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Undirected Barabasi-Albert edges.

    Starts from a star on nodes ``0..m``; each later node links to ``m``
    distinct existing nodes chosen proportionally to degree.
    """
    if m < 1 or m >= d:
        raise ValueError(f"attachment parameter must lie in [1, {d - 1}]")
    edges = [(0, j) for j in range(1, m + 1)]
    ends = [v for e in edges for v in e]  # node repeated once per incident edge
    for new in range(m + 1, d):
        targets: set = set()
        while len(targets) < m:
            targets.add(ends[rng.integers(len(ends))])
        for t in sorted(targets):
            edges.append((t, new))
            ends.extend((t, new))
    return edges


def gen_sf_dag(d: int, ratio: float, seed=None) -> BinaryDag:
    """Scale-free DAG with attachment ``m = floor(r/2)``, oriented by a random permutation."""
    if d < 2:
        raise ValueError("need at least two nodes")
    if ratio < 2:
        raise ValueError("scale-free graphs need ratio >= 2")
    rng = np.random.default_rng(seed)
    m = min(int(ratio // 2), d - 1)
    edges = ba_edges(d, m, rng)
    rank = rng.permutation(d)
    adj = np.zeros((d, d), dtype=np.int8)
    for u, v in edges:
        if rank[u] < rank[v]:
            adj[u, v] = 1
        else:
            adj[v, u] = 1
    return BinaryDag(adj)


@dataclass(frozen=True)
class BayesNetBinary:
    """Binary network. ``cpts[i][c]`` is ``P(X_i = 1)`` for parent configuration ``c``.

    Parent configurations are indexed by the parents' values in increasing node
    order, read as a binary number with the lowest-numbered parent as the most
    significant bit.
    """

    dag: BinaryDag
    cpts: tuple

    def __post_init__(self):
        for i, cpt in enumerate(self.cpts):
            k = len(self.parents(i))
            if np.shape(cpt) != (2**k,):
                raise ValueError(f"node {i}: CPT needs {2**k} rows")
            if np.any((np.asarray(cpt) < CPT_LOW) | (np.asarray(cpt) > CPT_HIGH)):
                raise ValueError(f"node {i}: CPT entries must lie in [{CPT_LOW}, {CPT_HIGH}]")

    def parents(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.dag.adjacency[:, i])

    @property
    def n_nodes(self) -> int:
        return self.dag.n_nodes


def gen_cpts(dag: BinaryDag, seed=None) -> BayesNetBinary:
    rng = np.random.default_rng(seed)
    cpts = []
    for i in range(dag.n_nodes):
        k = int(dag.adjacency[:, i].sum())
        if k > MAX_PARENTS:
            raise ValueError(f"node {i} has {k} parents; CPTs are limited to {MAX_PARENTS}")
        cpts.append(rng.uniform(CPT_LOW, CPT_HIGH, size=2**k))
    return BayesNetBinary(dag, tuple(cpts))


def ancestral_sample(net: BayesNetBinary, n: int, seed=None) -> Dataset:
    """``n`` i.i.d. rows drawn node by node in topological order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    d = net.n_nodes
    x = np.zeros((n, d), dtype=np.int64)
    for i in topological_order(net.dag.adjacency):
        pa = net.parents(i)
        code = np.zeros(n, dtype=np.int64)
        for j in pa:
            code = 2 * code + x[:, j]
        x[:, i] = rng.random(n) < net.cpts[i][code]
    return Dataset(x.astype(float), [2] * d, [f"x{i}" for i in range(d)])


def exact_marginals(net: BayesNetBinary) -> np.ndarray:
    """``P(X_i = 1)`` for every node by enumerating the joint (small ``d`` only)."""
    d = net.n_nodes
    if d > 16:
        raise ValueError("joint enumeration is limited to 16 nodes")
    states = (np.arange(2**d)[:, None] >> np.arange(d)[::-1]) & 1
    prob = np.ones(2**d)
    for i in range(d):
        code = np.zeros(2**d, dtype=np.int64)
        for j in net.parents(i):
            code = 2 * code + states[:, j]
        p1 = net.cpts[i][code]
        prob *= np.where(states[:, i] == 1, p1, 1 - p1)
    return prob @ states


def write_manifest(path, **fields) -> None:
    Path(path).write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")

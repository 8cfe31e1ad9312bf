"""Discrete graphs: reachability, low-order d-separation, pruning and I/O.

Adjacency matrices are ``d x d`` numpy arrays; entry ``(u, v) = 1`` means the
edge ``u -> v``. Functions that only need reachability accept any directed
graph, cycles included; :class:`BinaryDag` adds the acyclicity check.

The order-0 and order-1 separation formulas here are written purely in terms
of directed reachability (who is an ancestor of whom), which is what makes a
soft relaxation possible later. :func:`oracle_dsep` is a deliberately naive
path-enumeration check used to validate them.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

EXACT_FAS_MAX_NODES = 12
ORACLE_MAX_NODES = 12


class GraphError(ValueError):
    """Invalid graph or query."""


class CycleError(GraphError):
    pass


def as_adjacency(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {a.shape}")
    return (a != 0).astype(np.int8)


def is_acyclic(a) -> bool:
    return topological_order(a) is not None


def topological_order(a) -> list[int] | None:
    """Kahn's algorithm; ``None`` if the graph has a cycle."""
    a = as_adjacency(a)
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(int)
    if np.any(np.diag(a)):
        return None
    stack = [v for v in range(d - 1, -1, -1) if indeg[v] == 0]
    order = []
    while stack:
        u = stack.pop()
        order.append(u)
        for v in np.flatnonzero(a[u])[::-1]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(int(v))
    return order if len(order) == d else None


@dataclass(frozen=True)
class BinaryDag:
    """Adjacency of a directed acyclic graph."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = as_adjacency(self.adjacency)
        if np.any(np.diag(a)):
            raise CycleError("self-loops are not allowed")
        if not is_acyclic(a):
            raise CycleError("adjacency contains a directed cycle")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [(int(u), int(v)) for u, v in zip(*np.nonzero(self.adjacency))]

    def key(self) -> bytes:
        return self.adjacency.tobytes()

    def __eq__(self, other):
        return isinstance(other, BinaryDag) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash((self.n_nodes, self.key()))


def _adj(a) -> np.ndarray:
    return a.adjacency if isinstance(a, BinaryDag) else as_adjacency(a)


# ------------------------------------------------------------- index sets


@dataclass(frozen=True)
class QueryIndexSets:
    """Order-0 pairs ``(x, y)`` and order-1 triples ``(x, y, z)`` with ``x > y``."""

    order0: np.ndarray  # (d(d-1)/2, 2)
    order1: np.ndarray  # (d(d-1)(d-2)/2, 3)

    @classmethod
    def for_nodes(cls, d: int) -> "QueryIndexSets":
        o0 = [(x, y) for x in range(d) for y in range(x)]
        o1 = [(x, y, z) for x in range(d) for y in range(x) for z in range(d) if z != x and z != y]
        return cls(
            np.array(o0, dtype=int).reshape(-1, 2),
            np.array(o1, dtype=int).reshape(-1, 3),
        )


# ----------------------------------------------------------- reachability


def reach_discrete(g, max_len: int | None = None) -> np.ndarray:
    """Boolean matrix of directed paths of length at most ``max_len``.

    The diagonal is always true (the empty path). ``max_len`` defaults to
    ``d - 1``, which is enough for any simple path.
    """
    a = _adj(g).astype(bool)
    d = a.shape[0]
    if max_len is None:
        max_len = max(d - 1, 0)
    if max_len < 0:
        raise GraphError("max_len must be non-negative")
    r = np.eye(d, dtype=bool)
    for _ in range(max_len):
        nxt = r | ((r.astype(np.int32) @ a.astype(np.int32)) > 0)
        if np.array_equal(nxt, r):
            break
        r = nxt
    return r


def remove_node(w, z: int):
    """Drop row and column ``z``.

    Returns ``(sub, index_map)`` where ``index_map[old] = new`` for surviving
    nodes and ``-1`` for ``z``.
    """
    is_dag = isinstance(w, BinaryDag)
    m = w.adjacency if is_dag else np.asarray(w)
    d = m.shape[0]
    if not 0 <= z < d:
        raise GraphError(f"node {z} out of range for {d} nodes")
    keep = np.array([i for i in range(d) if i != z], dtype=int)
    sub = m[np.ix_(keep, keep)]
    index_map = np.full(d, -1, dtype=int)
    index_map[keep] = np.arange(d - 1)
    if is_dag:
        sub = BinaryDag(sub)
    return sub, index_map


# --------------------------------------------------- reachability formulas


def _connected0(r: np.ndarray) -> np.ndarray:
    """``C0[x, y]``: some node reaches both x and y."""
    ri = r.astype(np.int32)
    return (ri.T @ ri) > 0


def discrete_statements(g) -> tuple[np.ndarray, np.ndarray]:
    """All order-0 and order-1 d-connection values of ``g``.

    Returns ``(con0, con1)`` with ``con0[x, y]`` and ``con1[x, y, z]``
    boolean. Slots with repeated nodes are filled with ``False`` and carry no
    meaning. Works for any directed graph, not only DAGs.
    """
    a = _adj(g)
    d = a.shape[0]
    r = reach_discrete(a, d - 1)
    con0 = _connected0(r)
    con1 = np.zeros((d, d, d), dtype=bool)
    for z in range(d):
        sub, _ = remove_node(a, z)
        keep = np.array([i for i in range(d) if i != z])
        c_sub = _connected0(reach_discrete(sub, d - 2))
        to_z = r[keep, z]  # a reaches z, for a != z
        # x is 0-connected (without z) to some ancestor of z, or z itself
        front = (c_sub & to_z[None, :]).any(axis=1)
        block = c_sub | (front[:, None] & front[None, :])
        con1[np.ix_(keep, keep, [z])] = block[:, :, None]
    idx = np.arange(d)
    con1[idx, idx, :] = False
    con1[idx, :, idx] = False
    con1[:, idx, idx] = False
    return con0, con1


def _check_distinct(*nodes):
    if len(set(nodes)) != len(nodes):
        raise GraphError(f"query nodes must be distinct, got {nodes}")


def dcon0_discrete(a, x: int, y: int) -> bool:
    _check_distinct(x, y)
    r = reach_discrete(a)
    return bool(np.any(r[:, x] & r[:, y]))


def dsep0_discrete(a, x: int, y: int) -> bool:
    """True iff x and y have no common ancestor (each node is its own ancestor)."""
    return not dcon0_discrete(a, x, y)


def dcon1_discrete(a, x: int, y: int, z: int) -> bool:
    _check_distinct(x, y, z)
    adj = _adj(a)
    d = adj.shape[0]
    r = reach_discrete(adj)
    sub, index_map = remove_node(adj, z)
    c_sub = _connected0(reach_discrete(sub, d - 2))
    xs, ys = index_map[x], index_map[y]
    if c_sub[xs, ys]:
        return True
    others = [a_ for a_ in range(d) if a_ != z]
    via_x = any(c_sub[xs, index_map[n]] and r[n, z] for n in others)
    via_y = any(c_sub[ys, index_map[n]] and r[n, z] for n in others)
    return via_x and via_y


def dsep1_discrete(a, x: int, y: int, z: int) -> bool:
    return not dcon1_discrete(a, x, y, z)


# ------------------------------------------------------------------ oracle


def _descendants(adj: np.ndarray, v: int) -> set[int]:
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in np.flatnonzero(adj[u]):
            w = int(w)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def undirected_paths(adj: np.ndarray, x: int, y: int):
    """Yield every simple path between x and y in the skeleton of ``adj``."""
    nbrs = [set(np.flatnonzero(adj[u] | adj[:, u]).tolist()) for u in range(adj.shape[0])]
    path = [x]
    on_path = {x}

    def walk(u):
        if u == y:
            yield list(path)
            return
        for w in sorted(nbrs[u]):
            if w in on_path:
                continue
            path.append(w)
            on_path.add(w)
            yield from walk(w)
            path.pop()
            on_path.discard(w)

    yield from walk(x)


def path_blocked(adj: np.ndarray, path: list[int], cond: set[int], desc: dict[int, set[int]]) -> bool:
    for i in range(1, len(path) - 1):
        prev, mid, nxt = path[i - 1], path[i], path[i + 1]
        collider = bool(adj[prev, mid]) and bool(adj[nxt, mid])
        if collider:
            if not (desc[mid] & cond):
                return True
        elif mid in cond:
            return True
    return False


def oracle_dsep(a, x: int, y: int, cond=()) -> bool:
    """d-separation by brute-force enumeration of undirected paths.

    Test-only reference: exponential in the graph size, refused above
    ``ORACLE_MAX_NODES`` nodes.
    """
    adj = _adj(a)
    d = adj.shape[0]
    cond = set(int(c) for c in cond)
    if d > ORACLE_MAX_NODES:
        raise GraphError(f"oracle refuses graphs with more than {ORACLE_MAX_NODES} nodes")
    if len(cond) > 1:
        raise GraphError("oracle supports conditioning sets of size <= 1")
    if x == y or x in cond or y in cond:
        raise GraphError("x, y must be distinct and outside the conditioning set")
    desc = {v: _descendants(adj, v) for v in range(d)}
    return all(path_blocked(adj, p, cond, desc) for p in undirected_paths(adj, x, y))


# ------------------------------------------------------ feedback arc sets


def _min_fas_order(adj: np.ndarray) -> list[int]:
    """Vertex order minimising backward arcs, by DP over subsets."""
    k = adj.shape[0]
    out_mask = [sum(1 << int(v) for v in np.flatnonzero(adj[u])) for u in range(k)]
    full = (1 << k) - 1
    cost = [0] + [k * k + 1] * full
    choice = [-1] * (full + 1)
    for s in range(full + 1):
        base = cost[s]
        if base > k * k:
            continue
        rest = full & ~s
        while rest:
            low = rest & -rest
            v = low.bit_length() - 1
            rest ^= low
            # placing v after s: arcs v -> s point backwards
            c = base + bin(out_mask[v] & s).count("1")
            t = s | low
            if c < cost[t]:
                cost[t] = c
                choice[t] = v
    order = []
    s = full
    while s:
        v = choice[s]
        order.append(v)
        s &= ~(1 << v)
    return order[::-1]


def _greedy_fas_order(adj: np.ndarray) -> list[int]:
    """Eades-Lin-Smyth ordering heuristic."""
    a = adj.astype(bool).copy()
    np.fill_diagonal(a, False)
    alive = set(range(a.shape[0]))
    left: list[int] = []
    right: list[int] = []
    while alive:
        changed = True
        while changed:
            changed = False
            for v in sorted(alive):
                idx = sorted(alive)
                if not a[v, idx].any():  # sink
                    right.append(v)
                    alive.discard(v)
                    changed = True
                elif not a[idx, v].any():  # source
                    left.append(v)
                    alive.discard(v)
                    changed = True
        if alive:
            idx = sorted(alive)
            delta = {v: int(a[v, idx].sum()) - int(a[idx, v].sum()) for v in idx}
            v = max(idx, key=lambda u: (delta[u], -u))
            left.append(v)
            alive.discard(v)
    return left + right[::-1]


def feedback_arc_prune(g) -> BinaryDag:
    """Remove a feedback arc set so the result is acyclic.

    Works per strongly connected component. For ``d <= 12`` the removed set
    has minimum size (exact subset DP), otherwise the Eades-Lin-Smyth greedy
    order is used.
    """
    adj = _adj(g).copy()
    np.fill_diagonal(adj, 0)
    d = adj.shape[0]
    if is_acyclic(adj):
        return BinaryDag(adj)
    exact = d <= EXACT_FAS_MAX_NODES
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    for c in range(n_comp):
        nodes = np.flatnonzero(labels == c)
        if len(nodes) < 2:
            continue
        sub = adj[np.ix_(nodes, nodes)]
        order = _min_fas_order(sub) if exact else _greedy_fas_order(sub)
        pos = np.empty(len(nodes), dtype=int)
        pos[order] = np.arange(len(nodes))
        for i, j in zip(*np.nonzero(sub)):
            if pos[i] > pos[j]:
                adj[nodes[i], nodes[j]] = 0
    return BinaryDag(adj)


def min_fas_size_bruteforce(g) -> int:
    """Smallest number of edges whose removal leaves an acyclic graph."""
    adj = _adj(g).copy()
    np.fill_diagonal(adj, 0)
    edges = list(zip(*np.nonzero(adj)))
    for k in range(len(edges) + 1):
        for subset in itertools.combinations(edges, k):
            trial = adj.copy()
            for u, v in subset:
                trial[u, v] = 0
            if is_acyclic(trial):
                return k
    return len(edges)


# --------------------------------------------------------------------- I/O


def write_adjacency(path, a, fmt: str = "%d") -> None:
    m = a.adjacency if isinstance(a, BinaryDag) else np.asarray(a)
    np.savetxt(Path(path), m, fmt=fmt, delimiter=",")


def read_adjacency(path, weighted: bool = False) -> np.ndarray:
    m = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    if m.shape[0] != m.shape[1]:
        raise GraphError(f"{path}: adjacency must be square, got {m.shape}")
    return m if weighted else as_adjacency(m)


def read_dag(path) -> BinaryDag:
    return BinaryDag(read_adjacency(path))

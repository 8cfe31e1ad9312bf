"""Multi-task CI-statement losses and the sampler energy.

Four tasks score how well the soft d-separation statements of ``W = sigmoid(theta)``
agree with a table of p-values: true positives and true negatives at orders
0 and 1. A fifth task is the log-determinant acyclicity penalty

    L_dag(W) = -log det(s I - W) + d log s,

which is zero exactly when ``W`` is nilpotent and is only defined while
``s I - W`` stays inside the M-matrix domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .citests import CiTable
from .diffsep import log_weights, score_tensors, sub_index
from .softlogic import check_alpha

TASKS = ("tp0", "tp1", "tn0", "tn1", "dag")
W_EPS = 1e-12


def default_s(d: int) -> float:
    """3.0 for small graphs (d <= 20), 8.0 otherwise."""
    return 3.0 if d <= 20 else 8.0


def statement_weights(table: CiTable, scale: float) -> tuple:
    """Task weights ``scale / |I0|`` and ``scale / |I1|`` for the statement tasks, 1 for the DAG term."""
    m0 = max(len(table.index.order0), 1)
    m1 = max(len(table.index.order1), 1)
    return (scale / m0, scale / m1, scale / m0, scale / m1, 1.0)


def weights_from_logits(theta):
    """``W = clip(sigmoid(theta), eps, 1 - eps)`` with the diagonal hard-zeroed."""
    d = np.shape(ad.value_of(theta))[-1]
    off = 1.0 - np.eye(d)
    return ad.mul(ad.clip(ad.sigmoid(theta), W_EPS, 1.0 - W_EPS), off)


def dag_in_domain(w: np.ndarray, s: float) -> bool:
    """True when ``s I - W`` is a non-singular M-matrix (spectral radius < s)."""
    w = np.asarray(w, dtype=float)
    if np.max(np.abs(np.linalg.eigvals(w))) >= s:
        return False
    sign, _ = np.linalg.slogdet(s * np.eye(w.shape[0]) - w)
    return sign > 0


def dag_loss(w, s: float):
    """Log-det acyclicity penalty, or ``inf`` outside the domain."""
    wv = np.asarray(ad.value_of(w), dtype=float)
    d = wv.shape[0]
    if not dag_in_domain(wv, s):
        return np.inf
    m = ad.add(s * np.eye(d), ad.neg(w))
    return ad.add(ad.neg(ad.logdet(m)), d * np.log(s))


@dataclass(frozen=True)
class LossVector:
    """Values and ``theta``-gradients of the five tasks, in :data:`TASKS` order."""

    values: np.ndarray  # (5,)
    grads: np.ndarray  # (5, d, d)

    @property
    def tp0(self) -> float:
        return float(self.values[0])

    @property
    def tp1(self) -> float:
        return float(self.values[1])

    @property
    def tn0(self) -> float:
        return float(self.values[2])

    @property
    def tn1(self) -> float:
        return float(self.values[3])

    @property
    def dag(self) -> float:
        return float(self.values[4])

    @property
    def dag_infinite(self) -> bool:
        return not np.isfinite(self.values[4])

    def as_dict(self) -> dict:
        return dict(zip(TASKS, map(float, self.values)))


def _task_terms(theta, table: CiTable, s: float, alpha: float, max_len, weights):
    d = table.n_nodes
    idx = table.index
    o0, o1 = idx.order0, idx.order1
    p0, p1 = table.order0_values(), table.order1_values()
    m0, m1 = table.m0, table.m1

    w = weights_from_logits(theta)
    logw, log1m = log_weights(w)
    t = score_tensors(logw, log1m, alpha, max_len=max_len)

    sep0 = ad.take(t["dsep0"], (o0[:, 0], o0[:, 1]))
    con0 = ad.take(t["dcon0"], (o0[:, 0], o0[:, 1]))
    tp0 = ad.neg(ad.reduce_sum(ad.mul(sep0, p0)))
    tn0 = ad.neg(ad.reduce_sum(ad.mul(con0, m0 - p0)))
    if d >= 3:
        z = o1[:, 2]
        at = (z, sub_index(d, o1[:, 0], z), sub_index(d, o1[:, 1], z))
        sep1 = ad.take(t["dsep1_sub"], at)
        con1 = ad.take(t["dcon1_sub"], at)
        tp1 = ad.neg(ad.reduce_sum(ad.mul(sep1, p1)))
        tn1 = ad.neg(ad.reduce_sum(ad.mul(con1, m1 - p1)))
    else:
        tp1 = tn1 = 0.0
    out = [tp0, tp1, tn0, tn1, dag_loss(w, s)]
    if weights is not None:
        out = [o if c == 1.0 else ad.mul(o, float(c)) for o, c in zip(out, weights)]
    return out


def loss_suite(theta, table: CiTable, s: float | None = None, alpha: float = 0.01,
               weights=None, max_len: int | None = None) -> LossVector:
    """All five losses at ``theta`` and their gradients, from one reverse sweep.

    Parameters
    ----------
    theta : (d, d) array
        Edge logits. The diagonal is ignored and receives zero gradient.
    table : CiTable
        p-values for every order-0 and order-1 query.
    s : float, optional
        Log-det scale, defaults to :func:`default_s`.
    alpha : float
        t-conorm temperature.
    weights : sequence of 5 floats, optional
        Per-task multipliers (all ones by default).
    max_len : int, optional
        Cap on the path-length horizon of the reachability recursions.

    Returns
    -------
    LossVector
        An out-of-domain log-det term is reported as ``inf`` with zero gradient.
    """
    theta = np.asarray(theta, dtype=float)
    d = table.n_nodes
    if theta.shape != (d, d):
        raise ValueError(f"theta has shape {theta.shape}, table has {d} nodes")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    s = default_s(d) if s is None else float(s)
    alpha = check_alpha(alpha)
    if weights is not None and len(weights) != len(TASKS):
        raise ValueError("need one weight per task")
    values, grads = ad.values_and_grads(
        lambda v: _task_terms(v, table, s, alpha, max_len, weights), theta
    )
    return LossVector(values, grads)


def energy(losses: LossVector | dict | np.ndarray) -> float:
    """Sum of the five task losses; ``inf`` when the log-det term is out of domain."""
    if isinstance(losses, LossVector):
        vals = losses.values
    elif isinstance(losses, dict):
        vals = np.array([losses[k] for k in TASKS], dtype=float)
    else:
        vals = np.asarray(losses, dtype=float)
    if np.any(np.isposinf(vals)):
        return np.inf
    return float(np.sum(vals))

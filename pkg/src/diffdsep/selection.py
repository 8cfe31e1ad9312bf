"""Scoring sampled DAGs against data and against a reference graph.

:func:`tptn_ratio` needs only the p-value table and is what the sampler uses
to rank its candidates. :func:`ci_mcc` and :func:`structure_metrics` compare a
prediction with a known true DAG.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .citests import CiTable
from .diffsep import soft_scores
from .graph import BinaryDag, GraphError, QueryIndexSets, as_adjacency, discrete_statements

logger = logging.getLogger(__name__)

LOG_HALF = np.log(0.5)


@dataclass(frozen=True)
class DagCandidate:
    dag: BinaryDag
    tptn: float
    step: int

    def __post_init__(self):
        if not 0.0 <= self.tptn <= 1.0:
            raise ValueError(f"tptn score {self.tptn} outside [0, 1]")


@dataclass(frozen=True)
class MetricReport:
    ci_mcc: float
    skeleton_f1: float
    dag_f1: float
    shd: int

    def as_dict(self) -> dict:
        return asdict(self)


def _as_dag(a) -> BinaryDag:
    return a if isinstance(a, BinaryDag) else BinaryDag(as_adjacency(a))


def statement_vector(a, alpha: float | None = None) -> np.ndarray:
    """Boolean d-separation labels over the order-0 then order-1 query sets.

    With ``alpha=None`` the discrete formulas are used; otherwise the soft
    separation scores at temperature ``alpha`` are thresholded at 1/2.
    """
    adj = _as_dag(a).adjacency
    idx = QueryIndexSets.for_nodes(adj.shape[0])
    o0, o1 = idx.order0, idx.order1
    if alpha is None:
        con0, con1 = discrete_statements(adj)
        s0 = ~con0[o0[:, 0], o0[:, 1]]
        s1 = ~con1[o1[:, 0], o1[:, 1], o1[:, 2]]
    else:
        sc = soft_scores(adj.astype(float), alpha, con=False)
        s0 = sc.dsep0[o0[:, 0], o0[:, 1]] > LOG_HALF
        s1 = sc.dsep1[o1[:, 0], o1[:, 1], o1[:, 2]] > LOG_HALF
    return np.concatenate([s0, s1])


def tptn_counts(sep: np.ndarray, p: np.ndarray) -> dict:
    """p-weighted confusion masses of binary statements ``sep`` against ``p``."""
    s = np.asarray(sep, dtype=float)
    p = np.asarray(p, dtype=float)
    return {
        "tp": float(np.sum(s * p)),
        "tn": float(np.sum((1 - s) * (1 - p))),
        "fp": float(np.sum(s * (1 - p))),
        "fn": float(np.sum((1 - s) * p)),
    }


def tptn_ratio(a, table: CiTable, alpha_eval: float = 1e-5) -> float:
    """Weighted fraction of CI statements of ``a`` that agree with the p-values.

    Each separation statement counts with weight ``p`` and each connection
    statement with weight ``1 - p``. The result lies in [0, 1].
    """
    dag = _as_dag(a)
    if dag.n_nodes != table.n_nodes:
        raise GraphError("DAG and p-value table disagree on the number of nodes")
    sep = statement_vector(dag, alpha_eval)
    p = np.concatenate([table.order0_values(), table.order1_values()])
    c = tptn_counts(sep, p)
    total = c["tp"] + c["tn"] + c["fp"] + c["fn"]
    if total <= 0.0:
        return 0.0
    return float(min(1.0, max(0.0, (c["tp"] + c["tn"]) / total)))


def select_topk(cands: Sequence[DagCandidate], k: int) -> list[DagCandidate]:
    """Best ``k`` distinct DAGs by score; ties go to the later step."""
    if k < 1:
        raise ValueError("k must be at least 1")
    best: dict = {}
    for c in cands:
        key = c.dag.key()
        prev = best.get(key)
        if prev is None or (c.tptn, c.step) > (prev.tptn, prev.step):
            best[key] = c
    ranked = sorted(best.values(), key=lambda c: (c.tptn, c.step), reverse=True)
    if len(ranked) < k:
        warnings.warn(f"only {len(ranked)} distinct candidates for top-{k}", RuntimeWarning, stacklevel=2)
    return ranked[:k]


def mcc_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    den = float(tp + fp) * float(tp + fn) * float(tn + fp) * float(tn + fn)
    if den == 0.0:
        return 0.0
    return float((tp * tn - fp * fn) / np.sqrt(den))


def ci_mcc(pred, truth) -> float:
    """Matthews correlation of low-order d-separation statements.

    Positives are separations. Every unordered query ``x > y`` (and every
    ``z`` outside the pair) is counted once.
    """
    pred, truth = _as_dag(pred), _as_dag(truth)
    if pred.n_nodes != truth.n_nodes:
        raise GraphError(f"node count mismatch: {pred.n_nodes} vs {truth.n_nodes}")
    yp = statement_vector(pred)
    yt = statement_vector(truth)
    tp = int(np.sum(yp & yt))
    tn = int(np.sum(~yp & ~yt))
    fp = int(np.sum(yp & ~yt))
    fn = int(np.sum(~yp & yt))
    return mcc_from_counts(tp, tn, fp, fn)


def _f1(pred: set, truth: set) -> float:
    if not pred and not truth:
        return 1.0
    hit = len(pred & truth)
    if hit == 0:
        return 0.0
    prec, rec = hit / len(pred), hit / len(truth)
    return 2 * prec * rec / (prec + rec)


def structure_metrics(pred, truth) -> dict:
    """Directed-edge F1, skeleton F1 and SHD (a reversal is one edit)."""
    p = _as_dag(pred).adjacency.astype(bool)
    t = _as_dag(truth).adjacency.astype(bool)
    if p.shape != t.shape:
        raise GraphError(f"node count mismatch: {p.shape[0]} vs {t.shape[0]}")
    pe = set(zip(*np.nonzero(p)))
    te = set(zip(*np.nonzero(t)))
    ps = {frozenset(e) for e in pe}
    ts = {frozenset(e) for e in te}
    # one edit per unordered pair whose orientation state differs
    skel_p, skel_t = p | p.T, t | t.T
    differ = (skel_p != skel_t) | (skel_p & skel_t & (p != t))
    shd = int(np.sum(np.triu(differ, 1)))
    return {"dag_f1": _f1(pe, te), "skeleton_f1": _f1(ps, ts), "shd": shd}


def evaluate(pred, truth) -> MetricReport:
    s = structure_metrics(pred, truth)
    return MetricReport(ci_mcc=ci_mcc(pred, truth), skeleton_f1=s["skeleton_f1"], dag_f1=s["dag_f1"], shd=s["shd"])

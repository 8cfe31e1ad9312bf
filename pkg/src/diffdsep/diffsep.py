"""Soft reachability and low-order d-separation scores on weighted graphs.

A weight matrix ``W`` is read as independent Bernoulli edges. Reachability is
relaxed with the log-space operators from :mod:`diffdsep.softlogic`:

* ``R[x, y]`` - log-probability surrogate that y is reachable from x,
* ``U[x, y]`` - log-probability surrogate that y is *not* reachable from x,
  built from its own dual recursion (never as ``log(1 - exp(R))``),

and the separation scores combine them exactly as the reachability-only
separation formulas in :mod:`diffdsep.graph` do. Every score is a lower bound
on the log of the corresponding expectation over sampled graphs.

All functions accept plain arrays or tape :class:`~diffdsep.autodiff.Var`
values; the same code produces forward values and, on a tape, gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .softlogic import NEG_INF, check_alpha

UNDEFINED = np.nan


def _eye_log(n: int, on_diag: float, off_diag: float) -> np.ndarray:
    return np.where(np.eye(n, dtype=bool), on_diag, off_diag)


def log_weights(w):
    """``(log W, log(1 - W))`` with ``log(0) = NEG_INF``."""
    return ad.log(w), ad.log(ad.add(1.0, ad.neg(w)))


def _reach(logw, steps: int, alpha: float):
    shape = np.shape(ad.value_of(logw))
    r = np.broadcast_to(_eye_log(shape[-1], 0.0, NEG_INF), shape).copy()
    for _ in range(steps):
        # terms[..., x, u, y] = R[x, u] (and) W[u, y]; plus the old R[x, y]
        terms = ad.tnorm(ad.expand_dims(r, -1), ad.expand_dims(logw, -3))
        terms = ad.concat([terms, ad.expand_dims(r, -2)], axis=-2)
        r = ad.tconorm_reduce(terms, alpha, axis=-2)
    return r


def _unreach(log1m, steps: int, alpha: float):
    shape = np.shape(ad.value_of(log1m))
    u = np.broadcast_to(_eye_log(shape[-1], NEG_INF, 0.0), shape).copy()
    for _ in range(steps):
        # terms[..., x, v, y] = U[x, v] (or) not W[v, y]
        terms = ad.tconorm2(ad.expand_dims(u, -1), ad.expand_dims(log1m, -3), alpha)
        u = ad.tnorm(ad.tnorm_reduce(terms, axis=-2), u)
    return u


def _sep0(u, alpha):
    # for every a: a fails to reach x, or fails to reach y
    pair = ad.tconorm2(ad.expand_dims(u, -1), ad.expand_dims(u, -2), alpha)
    return ad.tnorm_reduce(pair, axis=-3)


def _con0(r, alpha):
    pair = ad.tnorm(ad.expand_dims(r, -1), ad.expand_dims(r, -2))
    return ad.tconorm_reduce(pair, alpha, axis=-3)


def _horizon(n: int, max_len: int | None) -> int:
    return n if max_len is None else min(n, max_len)


def keep_index(d: int) -> np.ndarray:
    """``K[z]`` lists the surviving node labels once z is removed, in order."""
    return np.array([[i for i in range(d) if i != z] for z in range(d)], dtype=int).reshape(d, d - 1)


def sub_index(d: int, x, z):
    """Label of node ``x`` in the graph with ``z`` removed."""
    x = np.asarray(x)
    return x - (x > np.asarray(z))


def score_tensors(logw, log1m, alpha: float, max_len: int | None = None, sep=True, con=True):
    """Raw score tensors.

    Returns a dict with (as requested) ``dsep0``/``dcon0`` of shape ``(d, d)``
    and ``dsep1_sub``/``dcon1_sub`` of shape ``(d, d-1, d-1)`` indexed
    ``[z, x', y']`` in the labels of the graph with z removed.
    """
    d = np.shape(ad.value_of(logw))[-1]
    out = {}
    keep = keep_index(d)
    rows, cols = keep[:, :, None], keep[:, None, :]
    zcol = np.arange(d)[:, None]
    steps_full = _horizon(d, max_len)
    steps_sub = _horizon(d - 1, max_len)

    if sep:
        u = _unreach(log1m, steps_full, alpha)
        out["dsep0"] = _sep0(u, alpha)
        if d >= 3:
            u_sub = _unreach(ad.take(log1m, (rows, cols)), steps_sub, alpha)
            s0_sub = _sep0(u_sub, alpha)
            u_col = ad.take(u, (keep, zcol))  # U[a, z] for a != z
            side = ad.tnorm_reduce(ad.tconorm2(s0_sub, ad.expand_dims(u_col, -2), alpha), axis=-1)
            either = ad.tconorm2(ad.expand_dims(side, -1), ad.expand_dims(side, -2), alpha)
            out["dsep1_sub"] = ad.tnorm(s0_sub, either)
    if con:
        r = _reach(logw, steps_full, alpha)
        out["dcon0"] = _con0(r, alpha)
        if d >= 3:
            r_sub = _reach(ad.take(logw, (rows, cols)), steps_sub, alpha)
            c0_sub = _con0(r_sub, alpha)
            r_col = ad.take(r, (keep, zcol))  # R[a, z] for a != z
            side = ad.tconorm_reduce(ad.tnorm(c0_sub, ad.expand_dims(r_col, -2)), alpha, axis=-1)
            both = ad.tnorm(ad.expand_dims(side, -1), ad.expand_dims(side, -2))
            out["dcon1_sub"] = ad.tconorm2(c0_sub, both, alpha)
    return out


@dataclass(frozen=True)
class SoftScoreSet:
    """Log-space soft separation/connection scores.

    ``dsep1[x, y, z]`` is the score of "x and y separated given z". Slots with
    repeated nodes hold ``nan``.
    """

    dsep0: np.ndarray
    dcon0: np.ndarray
    dsep1: np.ndarray
    dcon1: np.ndarray
    alpha: float

    @property
    def n_nodes(self) -> int:
        return self.dsep0.shape[0]


def _full_order1(sub: np.ndarray, d: int) -> np.ndarray:
    full = np.full((d, d, d), UNDEFINED)
    if sub is None:
        return full
    for z in range(d):
        keep = [i for i in range(d) if i != z]
        full[np.ix_(keep, keep, [z])] = sub[z][:, :, None]
    idx = np.arange(d)
    full[idx, idx, :] = UNDEFINED
    return full


def _mask_diag(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=float)
    np.fill_diagonal(m, UNDEFINED)
    return m


def soft_reach(w, l: int, alpha: float = 0.01) -> np.ndarray:
    """Soft reachability over paths of length at most ``l``."""
    w = np.asarray(w, dtype=float)
    if not 0 <= l <= w.shape[0]:
        raise ValueError(f"path length must lie in [0, {w.shape[0]}]")
    logw, _ = log_weights(w)
    return _reach(logw, l, check_alpha(alpha))


def soft_unreach(w, l: int, alpha: float = 0.01) -> np.ndarray:
    """Soft unreachability over paths of length at most ``l``."""
    w = np.asarray(w, dtype=float)
    if not 0 <= l <= w.shape[0]:
        raise ValueError(f"path length must lie in [0, {w.shape[0]}]")
    _, log1m = log_weights(w)
    return _unreach(log1m, l, check_alpha(alpha))


def soft_scores(w, alpha: float, max_len: int | None = None, sep=True, con=True) -> SoftScoreSet:
    """All four soft score families for a weight matrix.

    Entries of ``w`` that are exactly 0 or 1 go through the saturating log, so
    a binary adjacency is scored exactly as a hard graph.
    """
    w = np.asarray(w, dtype=float)
    d = w.shape[0]
    alpha = check_alpha(alpha)
    logw, log1m = log_weights(w)
    t = score_tensors(logw, log1m, alpha, max_len=max_len, sep=sep, con=con)
    nan2 = np.full((d, d), UNDEFINED)
    return SoftScoreSet(
        dsep0=_mask_diag(t["dsep0"]) if sep else nan2,
        dcon0=_mask_diag(t["dcon0"]) if con else nan2,
        dsep1=_full_order1(t.get("dsep1_sub"), d),
        dcon1=_full_order1(t.get("dcon1_sub"), d),
        alpha=alpha,
    )

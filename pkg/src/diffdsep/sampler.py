"""Gradient-informed discrete sampling of edge logits.

Each off-diagonal logit lives on a small finite support. One step of the chain
evaluates the five task losses, merges their gradients with PCGrad, draws a
factorised categorical proposal from a discrete Langevin kernel and corrects
it with a Metropolis-Hastings test on the summed energy.

Because the proposal uses projected rather than raw gradients, the chain is
not guaranteed to be exactly reversible for the summed energy. The MH step is
kept anyway; its acceptance rate is the main diagnostic for the step size.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_softmax

from .citests import CiTable
from .graph import feedback_arc_prune
from .objective import energy, loss_suite, statement_weights
from .selection import DagCandidate, tptn_ratio

logger = logging.getLogger(__name__)

DEFAULT_SUPPORT = (-2.0, 0.0, 2.0)
WARMUP_STEPS = 100
LOG_EVERY = 50
ACCEPT_BAND = (0.02, 0.98)


def _check_support(support) -> np.ndarray:
    sup = np.asarray(support, dtype=float)
    if sup.ndim != 1 or sup.size < 2 or np.any(np.diff(sup) <= 0):
        raise ValueError("support must be a strictly increasing list of at least two values")
    if not (sup[0] < 0 < sup[-1]):
        raise ValueError("support needs a negative minimum and a positive maximum")
    return sup


@dataclass
class LogitState:
    """Edge logits restricted to ``support`` off the diagonal; the diagonal is 0."""

    theta: np.ndarray
    support: tuple = DEFAULT_SUPPORT

    def __post_init__(self):
        sup = _check_support(self.support)
        self.support = tuple(float(v) for v in sup)
        th = np.array(self.theta, dtype=float)
        if th.ndim != 2 or th.shape[0] != th.shape[1]:
            raise ValueError("theta must be square")
        np.fill_diagonal(th, 0.0)
        off = ~np.eye(th.shape[0], dtype=bool)
        if not np.all(np.isin(th[off], sup)):
            raise ValueError("off-diagonal logits must lie on the support")
        self.theta = th

    @classmethod
    def constant(cls, d: int, value: float, support=DEFAULT_SUPPORT) -> "LogitState":
        return cls(np.full((d, d), float(value)), support)

    @property
    def n_nodes(self) -> int:
        return self.theta.shape[0]

    def support_index(self) -> np.ndarray:
        """Position of each entry in the support (diagonal entries map to the nearest)."""
        sup = np.asarray(self.support)
        return np.abs(self.theta[..., None] - sup).argmin(axis=-1)

    def threshold(self) -> np.ndarray:
        """Binary graph with an edge wherever ``sigmoid(theta) > 0.5``."""
        a = (expit(self.theta) > 0.5).astype(np.int8)
        np.fill_diagonal(a, 0)
        return a


@dataclass
class ChainConfig:
    """Hyperparameters of one chain.

    ``s=None`` selects the default log-det scale for the graph size. ``init``
    is the starting value of every off-diagonal logit and is snapped to the
    nearest support point.

    ``max_len`` caps the path length of the reachability recursions; 0 or
    ``None`` uses the full horizon of ``d`` steps. The full horizon makes the
    statement losses very sharp and the chain rarely moves, so the default
    keeps single-edge paths only.

    ``statement_scale`` rescales every statement task to ``scale / |queries|``
    so the energy no longer grows with the number of queries; 0 or ``None``
    keeps the plain sums. Explicit ``task_weights`` take precedence.
    """

    beta: float = 0.8
    steps: int = 1000
    alpha_train: float = 0.01
    alpha_eval: float = 1e-5
    s: float | None = None
    seed: int = 0
    topk: int = 5
    support: tuple = DEFAULT_SUPPORT
    max_len: int | None = 1
    init: float = 0.0
    task_weights: tuple | None = None
    statement_scale: float | None = 30.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.topk < 1:
            raise ValueError("topk must be at least 1")
        if self.max_len is not None and self.max_len < 0:
            raise ValueError("max_len must be non-negative")
        if self.statement_scale is not None and self.statement_scale < 0:
            raise ValueError("statement_scale must be non-negative")
        self.support = tuple(float(v) for v in _check_support(self.support))


# ------------------------------------------------------------------ PCGrad


def pcgrad_parts(grads: Sequence[np.ndarray], rng: np.random.Generator | None = None):
    """Per-task projected gradients and the order in which conflicts were resolved.

    Returns ``(projected, orders)``. ``orders[i]`` lists the other tasks in the
    order they were visited for task ``i``; ``rng=None`` visits them in index
    order.
    """
    if len(grads) == 0:
        raise ValueError("pcgrad needs at least one gradient")
    shape = np.shape(grads[0])
    if any(np.shape(g) != shape for g in grads):
        raise ValueError("all gradients must share one shape")
    flat = [np.asarray(g, dtype=float).ravel() for g in grads]
    norms = [float(g @ g) for g in flat]
    projected, orders = [], []
    for i, gi in enumerate(flat):
        gi = gi.copy()
        others = [j for j in range(len(flat)) if j != i]
        if rng is not None:
            others = [others[k] for k in rng.permutation(len(others))]
        for j in others:
            if norms[j] == 0.0:
                continue
            dot = float(gi @ flat[j])
            if dot < 0.0:
                gi -= dot / norms[j] * flat[j]
        projected.append(gi.reshape(shape))
        orders.append(others)
    return projected, orders


def pcgrad(grads: Sequence[np.ndarray], rng: np.random.Generator | None = None) -> np.ndarray:
    """Sum of gradients after projecting away pairwise conflicts."""
    projected, _ = pcgrad_parts(grads, rng)
    return np.sum(projected, axis=0)


# --------------------------------------------------------------------- DLP


def proposal_logprobs(theta: np.ndarray, grad: np.ndarray, beta: float, support) -> np.ndarray:
    """Log-probabilities ``(d, d, |support|)`` of the per-entry categorical proposal.

    The logit of moving entry ``i`` to value ``v`` is
    ``grad_i * (theta_i - v) / 2 - (theta_i - v)**2 / (2 beta)``.
    """
    sup = np.asarray(support, dtype=float)
    diff = np.asarray(theta, dtype=float)[..., None] - sup
    logits = 0.5 * np.asarray(grad, dtype=float)[..., None] * diff - diff**2 / (2.0 * beta)
    return log_softmax(logits, axis=-1)


def _offdiag_sum(x: np.ndarray) -> float:
    return float(x.sum() - np.trace(x))


def proposal_logprob(theta, theta_new, grad, beta: float, support) -> float:
    """``log q(theta_new | theta)`` summed over off-diagonal entries."""
    lp = proposal_logprobs(theta, grad, beta, support)
    idx = np.abs(np.asarray(theta_new)[..., None] - np.asarray(support)).argmin(axis=-1)
    picked = np.take_along_axis(lp, idx[..., None], axis=-1)[..., 0]
    return _offdiag_sum(picked)


def dlp_sample(theta, grad, beta: float, rng: np.random.Generator, support=DEFAULT_SUPPORT):
    """Draw ``theta'`` from the proposal. Returns ``(theta', log_q_fwd)``."""
    sup = np.asarray(support, dtype=float)
    lp = proposal_logprobs(theta, grad, beta, sup)
    cdf = np.cumsum(np.exp(lp), axis=-1)
    u = rng.random(np.shape(theta))
    idx = np.minimum((u[..., None] >= cdf).sum(axis=-1), len(sup) - 1)
    new = sup[idx]
    np.fill_diagonal(new, 0.0)
    picked = np.take_along_axis(lp, idx[..., None], axis=-1)[..., 0]
    return new, _offdiag_sum(picked)


def dlp_propose(state: LogitState, grad: np.ndarray, beta: float, rng: np.random.Generator,
                grad_fn: Callable[[np.ndarray], np.ndarray] | None = None):
    """One discrete Langevin proposal.

    Parameters
    ----------
    state : LogitState
    grad : (d, d) array
        Projected gradient at ``state.theta``.
    beta : float
        Step size.
    rng : numpy Generator
    grad_fn : callable, optional
        Returns the projected gradient at the proposed logits, needed for the
        reverse probability. When omitted, ``grad`` is reused.

    Returns
    -------
    (LogitState, float, float)
        The proposal and ``log q(theta' | theta)``, ``log q(theta | theta')``.
    """
    new, log_fwd = dlp_sample(state.theta, grad, beta, rng, state.support)
    grad_new = grad if grad_fn is None else grad_fn(new)
    log_rev = proposal_logprob(new, state.theta, grad_new, beta, state.support)
    return LogitState(new, state.support), log_fwd, log_rev


def mh_accept(u_old: float, u_new: float, log_q_fwd: float, log_q_rev: float,
              rng: np.random.Generator) -> bool:
    """Metropolis-Hastings test for target ``exp(-U)``.

    A uniform draw is consumed on every call so the random stream does not
    depend on the outcome.
    """
    u = rng.random()
    if np.isposinf(u_new) or np.isnan(u_new):
        return False
    if np.isposinf(u_old):
        return True
    log_ratio = u_old - u_new + log_q_rev - log_q_fwd
    return bool(np.log(u) < min(0.0, log_ratio))


# ------------------------------------------------------------------- chain


@dataclass
class ChainResult:
    candidates: list
    acceptance_rate: float
    final_state: LogitState
    trace: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def _snap(value: float, support) -> float:
    sup = np.asarray(support)
    return float(sup[np.abs(sup - value).argmin()])


def _start_state(d: int, config: ChainConfig, evaluate):
    state = LogitState.constant(d, _snap(config.init, config.support), config.support)
    losses = evaluate(state.theta)
    if np.isfinite(energy(losses)):
        return state, losses
    fallback = config.support[0]
    warnings.warn(
        f"starting logits {state.theta[0, 1]} put the acyclicity term out of its domain; "
        f"restarting from the empty graph (all logits {fallback})",
        RuntimeWarning,
        stacklevel=3,
    )
    state = LogitState.constant(d, fallback, config.support)
    losses = evaluate(state.theta)
    if not np.isfinite(energy(losses)):
        raise RuntimeError("no finite-energy starting point; increase s")
    return state, losses


def run_chain(table: CiTable, config: ChainConfig | None = None, trace_path=None) -> ChainResult:
    """Run one chain and return every visited DAG with its selection score.

    Each step proposes new logits, accepts or rejects them, prunes the
    thresholded graph to a DAG and scores it with :func:`tptn_ratio`. The
    result is bit-identical for a fixed ``config.seed``.

    ``trace_path`` receives one JSON record per step.
    """
    config = config or ChainConfig()
    d = table.n_nodes
    chain_ss, proj_ss = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(chain_ss)
    proj_rng = np.random.default_rng(proj_ss)

    weights = config.task_weights
    if weights is None and config.statement_scale:
        weights = statement_weights(table, config.statement_scale)
    max_len = config.max_len or None

    def evaluate(theta):
        return loss_suite(theta, table, s=config.s, alpha=config.alpha_train,
                          weights=weights, max_len=max_len)

    state, losses = _start_state(d, config, evaluate)
    u_cur = energy(losses)
    g_cur = pcgrad(losses.grads, proj_rng)

    scores: dict = {}
    candidates, trace = [], []
    n_accept = 0
    warned = False
    sink = open(trace_path, "w") if trace_path is not None else None
    try:
        for t in range(config.steps):
            new, log_fwd = dlp_sample(state.theta, g_cur, config.beta, rng, config.support)
            new_losses = evaluate(new)
            u_new = energy(new_losses)
            if np.isfinite(u_new):
                g_new = pcgrad(new_losses.grads, proj_rng)
                log_rev = proposal_logprob(new, state.theta, g_new, config.beta, config.support)
            else:
                g_new, log_rev = None, -np.inf
            accepted = mh_accept(u_cur, u_new, log_fwd, log_rev, rng)
            if accepted:
                state = LogitState(new, config.support)
                losses, u_cur, g_cur = new_losses, u_new, g_new
                n_accept += 1
            rate = n_accept / (t + 1)

            dag = feedback_arc_prune(state.threshold())
            key = dag.key()
            if key not in scores:
                scores[key] = tptn_ratio(dag, table, config.alpha_eval)
            candidates.append(DagCandidate(dag, scores[key], t))

            rec = {
                "step": t,
                "energy": u_cur,
                "losses": [float(v) for v in losses.values],
                "accepted": bool(accepted),
                "acceptance_rate": rate,
                "tptn_ratio": scores[key],
            }
            trace.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec) + "\n")

            if (t + 1) % LOG_EVERY == 0:
                logger.info("step %d energy %.4g acceptance %.3f tptn %.4f", t + 1, u_cur, rate, scores[key])
                if t + 1 >= WARMUP_STEPS and not warned and not ACCEPT_BAND[0] < rate < ACCEPT_BAND[1]:
                    hint = "decrease" if rate <= ACCEPT_BAND[0] else "increase"
                    warnings.warn(
                        f"acceptance rate {rate:.3f} after {t + 1} steps is outside "
                        f"{ACCEPT_BAND}; try to {hint} beta (now {config.beta})",
                        RuntimeWarning,
                        stacklevel=2,
                    )
                    warned = True
    finally:
        if sink is not None:
            sink.close()
    return ChainResult(candidates, n_accept / config.steps, state, trace)

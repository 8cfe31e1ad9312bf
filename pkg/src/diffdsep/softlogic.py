"""Log-space product t-norm and log-mean-exp t-conorm.

Probabilities are carried as their logarithms. ``log(0)`` is represented by
the finite sentinel :data:`NEG_INF` and every operator saturates on it, so no
``-inf - (-inf)`` ever reaches the arithmetic and the gradient of a saturated
branch is exactly zero.

The array kernels (``tnorm``, ``tnorm_reduce``, ``tconorm2``, ``tconorm_reduce``)
return the forward value together with whatever the reverse pass needs; the
list-level :func:`log_tnorm` and :func:`log_tconorm` are thin wrappers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

NEG_INF = -1e9
# Anything at or below this is treated as log(0).
SATURATION = 0.5 * NEG_INF
_LOG2 = np.log(2.0)


def is_saturated(x):
    return np.asarray(x) <= SATURATION


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"temperature must lie in (0, 1], got {alpha}")
    return alpha


def saturating_log(x):
    """``log(x)`` with ``log(0) = NEG_INF``."""
    x = np.asarray(x, dtype=float)
    pos = x > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(pos, np.log(np.where(pos, x, 1.0)), NEG_INF)
    return out


# ---------------------------------------------------------------- t-norm


def tnorm(a, b):
    """Saturating elementwise ``a + b``. Returns ``(value, live_mask)``."""
    out = np.add(a, b, dtype=float)
    live = out > SATURATION
    out = np.where(live, out, NEG_INF)
    return out, live


def tnorm_reduce(x, axis):
    """Saturating sum along ``axis``. Returns ``(value, live_mask)``."""
    out = np.sum(x, axis=axis, dtype=float)
    live = out > SATURATION
    out = np.where(live, out, NEG_INF)
    return out, live


# -------------------------------------------------------------- t-conorm


def tconorm_reduce(x, alpha: float, axis: int, m: int | None = None):
    """Log-mean-exp of ``x`` along ``axis`` at temperature ``alpha``.

    Saturated entries are dropped from the sum but still counted in the
    divisor ``m`` (which defaults to the length of ``axis``).

    Returns ``(value, weights)`` where ``weights`` are the partial
    derivatives of the output with respect to each input entry.
    """
    x = np.asarray(x, dtype=float)
    if m is None:
        m = x.shape[axis]
    valid = x > SATURATION
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        top = np.max(np.where(valid, x, -np.inf), axis=axis, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.where(valid, np.exp((x - top) / alpha), 0.0)
        s = np.sum(e, axis=axis, keepdims=True)
        alive = s > 0.0
        safe_s = np.where(alive, s, 1.0)
        out = np.where(alive, top + alpha * np.log(safe_s / m), NEG_INF)
        weights = e / safe_s
    out = np.minimum(np.squeeze(out, axis=axis), 0.0)
    return out, weights


def tconorm2(a, b, alpha: float):
    """Elementwise two-argument log-mean-exp (``m = 2``) with broadcasting.

    Returns ``(value, weight_a, weight_b)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a_top = a >= b
    top = np.where(a_top, a, b)
    low = np.where(a_top, b, a)
    # relative weight of the smaller operand; a saturated one contributes nothing
    e = np.where(low > SATURATION, np.exp((low - top) / alpha), 0.0)
    alive = top > SATURATION
    out = np.where(alive, np.minimum(top + alpha * (np.log1p(e) - _LOG2), 0.0), NEG_INF)
    w_top = np.where(alive, 1.0 / (1.0 + e), 0.0)
    w_low = e * w_top
    return out, np.where(a_top, w_top, w_low), np.where(a_top, w_low, w_top)


# ------------------------------------------------------------ list level


def log_tnorm(xs: Sequence[float]) -> float:
    """Product t-norm in log space: the saturating sum of ``xs``.

    >>> round(log_tnorm([np.log(0.5), np.log(0.5)]), 12) == round(np.log(0.25), 12)
    True
    """
    if len(xs) == 0:
        raise ValueError("log_tnorm needs at least one operand")
    value, _ = tnorm_reduce(np.asarray(xs, dtype=float), axis=0)
    return float(value)


def log_tconorm(xs: Sequence[float], alpha: float) -> float:
    """Max t-conorm in log space, approximated by log-mean-exp.

    The result lies within ``[max(xs) - alpha * log(m), max(xs)]``.
    """
    if len(xs) == 0:
        raise ValueError("log_tconorm needs at least one operand")
    alpha = check_alpha(alpha)
    value, _ = tconorm_reduce(np.asarray(xs, dtype=float), alpha, axis=0)
    return float(value)

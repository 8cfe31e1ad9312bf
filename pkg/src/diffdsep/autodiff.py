"""A small reverse-mode gradient tape over numpy arrays.

Only a fixed set of array operations is registered. Each one has a forward
rule and a vector-Jacobian rule; a :class:`Tape` records every application in
execution order and replays it backwards. Cotangents carry a leading batch
axis, so the gradients of several scalar outputs (for example the five task
losses) come out of a single reverse sweep.

Every op is also callable on plain arrays, in which case nothing is recorded
and the forward value is returned directly. The score code relies on this so
that one implementation serves both the evaluation path and the training
path.

Using anything other than the registered ops on a :class:`Var` (``np.tanh``,
``np.sum`` ...) raises :class:`UnregisteredOperationError` while the
expression is being built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import expit

from . import softlogic as sl


class UnregisteredOperationError(TypeError):
    """An operation outside the registered set was applied to a Var."""


@dataclass(frozen=True)
class _OpRule:
    name: str
    forward: Callable[..., tuple[Any, Any]]
    backward: Callable[..., Sequence[Any]]


_REGISTRY: dict[str, _OpRule] = {}


def register(name: str, forward, backward) -> None:
    _REGISTRY[name] = _OpRule(name, forward, backward)


def registered_ops() -> list[str]:
    return sorted(_REGISTRY)


class _Const:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


@dataclass
class _Node:
    op: str
    inputs: list  # node ids (int) or _Const
    kwargs: dict
    value: Any
    ctx: Any = None


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple:
        return np.shape(self.value)

    @property
    def ndim(self) -> int:
        return np.ndim(self.value)

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={self.shape})"

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # ndarray (+|-|*) Var lands here; route those to the tape.
        if method == "__call__" and not kwargs:
            if ufunc is np.add:
                return add(*inputs)
            if ufunc is np.multiply:
                return mul(*inputs)
            if ufunc is np.subtract:
                return add(inputs[0], neg(inputs[1]))
            if ufunc is np.negative:
                return neg(inputs[0])
        raise UnregisteredOperationError(
            f"numpy ufunc {ufunc.__name__!r} is not a registered tape operation"
        )

    def __array_function__(self, func, types, args, kwargs):
        raise UnregisteredOperationError(
            f"numpy function {func.__name__!r} is not a registered tape operation"
        )

    def __array__(self, *args, **kwargs):
        raise UnregisteredOperationError("a Var cannot be converted to a plain array")

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None):
        return reduce_sum(self, axis=axis)


@dataclass
class Tape:
    """Ordered record of the operations of one forward evaluation."""

    nodes: list[_Node] = field(default_factory=list)
    last_visit_order: list[int] = field(default_factory=list)

    def variable(self, value) -> Var:
        self.nodes.append(_Node("input", [], {}, np.array(value, dtype=float)))
        return Var(self, len(self.nodes) - 1)

    def _record(self, op: str, args, kwargs, value, ctx) -> Var:
        inputs = []
        for a in args:
            if isinstance(a, Var):
                if a.tape is not self:
                    raise ValueError("cannot mix Vars from different tapes")
                inputs.append(a.index)
            else:
                inputs.append(_Const(a))
        self.nodes.append(_Node(op, inputs, kwargs, value, ctx))
        return Var(self, len(self.nodes) - 1)

    def _input_values(self, node: _Node, values=None):
        if values is None:
            return [self.nodes[i].value if isinstance(i, int) else i.value for i in node.inputs]
        return [values[i] if isinstance(i, int) else i.value for i in node.inputs]

    def replay(self) -> list:
        """Re-run every recorded forward rule from the leaf inputs."""
        values: list = []
        for node in self.nodes:
            if node.op == "input":
                values.append(node.value)
                continue
            args = [values[i] if isinstance(i, int) else i.value for i in node.inputs]
            value, _ = _REGISTRY[node.op].forward(*args, **node.kwargs)
            values.append(value)
        return values

    def gradient(self, outputs: Sequence[Var], wrt: Sequence[Var]) -> list[np.ndarray]:
        """Gradients of each scalar output with respect to each ``wrt``.

        Returns one array per ``wrt`` entry, shaped ``(len(outputs), *shape)``.
        """
        k = len(outputs)
        adjoint: dict[int, np.ndarray] = {}
        for j, out in enumerate(outputs):
            if not isinstance(out, Var):
                continue
            if out.tape is not self:
                raise ValueError("output does not belong to this tape")
            if np.ndim(out.value) != 0:
                raise ValueError("gradient outputs must be scalars")
            seed = np.zeros(k)
            seed[j] = 1.0
            adjoint[out.index] = adjoint.get(out.index, 0.0) + seed

        visit = []
        for idx in range(len(self.nodes) - 1, -1, -1):
            if idx not in adjoint:
                continue
            node = self.nodes[idx]
            visit.append(idx)
            if node.op == "input":
                continue
            g = adjoint[idx]
            args = self._input_values(node)
            grads = _REGISTRY[node.op].backward(g, node.ctx, *args, **node.kwargs)
            for src, gi in zip(node.inputs, grads):
                if not isinstance(src, int) or gi is None:
                    continue
                if src in adjoint:
                    adjoint[src] = adjoint[src] + gi
                else:
                    adjoint[src] = gi
        self.last_visit_order = visit

        result = []
        for v in wrt:
            shape = (k,) + np.shape(v.value)
            g = adjoint.get(v.index)
            result.append(np.zeros(shape) if g is None else np.broadcast_to(g, shape).copy())
        return result


# ------------------------------------------------------------------ helpers


def _apply(name: str, *args, **kwargs):
    tape = None
    for a in args:
        if isinstance(a, Var):
            tape = a.tape
            break
    vals = [a.value if isinstance(a, Var) else a for a in args]
    value, ctx = _REGISTRY[name].forward(*vals, **kwargs)
    if tape is None:
        return value
    return tape._record(name, args, kwargs, value, ctx)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g, shape):
    """Sum a batched cotangent ``(K, *broadcast_shape)`` down to ``(K, *shape)``."""
    shape = tuple(shape)
    extra = g.ndim - 1 - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(1, 1 + extra)))
    axes = tuple(i + 1 for i, s in enumerate(shape) if s == 1 and g.shape[i + 1] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _neg_axis(axis: int, ndim: int) -> int:
    return axis - ndim if axis >= 0 else axis


def _bshape(x):
    return np.shape(x)


# ---------------------------------------------------------------- registry


def _add_f(a, b):
    return np.add(a, b, dtype=float), None


def _add_b(g, ctx, a, b):
    return _unbroadcast(g, _bshape(a)), _unbroadcast(g, _bshape(b))


register("add", _add_f, _add_b)


def _neg_f(a):
    return -np.asarray(a, dtype=float), None


register("neg", _neg_f, lambda g, ctx, a: (-g,))


def _mul_f(a, b):
    return np.multiply(a, b, dtype=float), None


def _mul_b(g, ctx, a, b):
    return _unbroadcast(g * b, _bshape(a)), _unbroadcast(g * a, _bshape(b))


register("mul", _mul_f, _mul_b)


def _log_f(a):
    return sl.saturating_log(a), None


def _log_b(g, ctx, a):
    a = np.asarray(a, dtype=float)
    pos = a > 0.0
    return (g * np.where(pos, 1.0 / np.where(pos, a, 1.0), 0.0),)


register("log", _log_f, _log_b)


def _exp_f(a):
    out = np.exp(a)
    return out, out


register("exp", _exp_f, lambda g, ctx, a: (g * ctx,))


def _sigmoid_f(a):
    out = expit(a)
    return out, out


register("sigmoid", _sigmoid_f, lambda g, ctx, a: (g * ctx * (1.0 - ctx),))


def _clip_f(a, lo, hi):
    return np.clip(a, lo, hi), None


def _clip_b(g, ctx, a, lo, hi):
    inside = (a > lo) & (a < hi)
    return g * inside, None, None


register("clip", _clip_f, _clip_b)


def _tnorm_f(a, b):
    return sl.tnorm(a, b)


def _tnorm_b(g, live, a, b):
    gl = g * live
    return _unbroadcast(gl, _bshape(a)), _unbroadcast(gl, _bshape(b))


register("tnorm", _tnorm_f, _tnorm_b)


def _tnorm_reduce_f(x, axis):
    return sl.tnorm_reduce(x, axis)


def _tnorm_reduce_b(g, live, x, axis):
    ax = _neg_axis(axis, np.ndim(x))
    gx = np.expand_dims(g * live, ax)
    return (np.broadcast_to(gx, g.shape[:1] + np.shape(x)),)


register("tnorm_reduce", _tnorm_reduce_f, _tnorm_reduce_b)


def _tconorm2_f(a, b, alpha):
    out, wa, wb = sl.tconorm2(a, b, alpha)
    return out, (wa, wb)


def _tconorm2_b(g, ctx, a, b, alpha):
    wa, wb = ctx
    return _unbroadcast(g * wa, _bshape(a)), _unbroadcast(g * wb, _bshape(b))


register("tconorm2", _tconorm2_f, _tconorm2_b)


def _tconorm_reduce_f(x, alpha, axis, m=None):
    return sl.tconorm_reduce(x, alpha, axis, m)


def _tconorm_reduce_b(g, weights, x, alpha, axis, m=None):
    ax = _neg_axis(axis, np.ndim(x))
    return (np.expand_dims(g, ax) * weights,)


register("tconorm_reduce", _tconorm_reduce_f, _tconorm_reduce_b)


def _sum_f(x, axis=None):
    return np.sum(x, axis=axis), None


def _sum_b(g, ctx, x, axis=None):
    shape = np.shape(x)
    if axis is None:
        gx = g.reshape(g.shape[:1] + (1,) * len(shape))
    else:
        gx = np.expand_dims(g, _neg_axis(axis, len(shape)))
    return (np.broadcast_to(gx, g.shape[:1] + shape),)


register("sum", _sum_f, _sum_b)


def _take_f(x, idx):
    return np.asarray(x)[idx], None


def _take_b(g, ctx, x, idx):
    out = np.zeros(g.shape[:1] + np.shape(x))
    for k in range(g.shape[0]):
        np.add.at(out[k], idx, g[k])
    return (out,)


register("take", _take_f, _take_b)


def _expand_f(x, axis):
    return np.expand_dims(x, axis), None


def _expand_b(g, ctx, x, axis):
    ax = _neg_axis(axis, np.ndim(x) + 1)
    return (np.squeeze(g, axis=ax),)


register("expand_dims", _expand_f, _expand_b)


def _concat_f(*xs, axis):
    return np.concatenate(xs, axis=axis), None


def _concat_b(g, ctx, *xs, axis):
    ax = _neg_axis(axis, np.ndim(xs[0]))
    sizes = np.cumsum([np.shape(x)[ax] for x in xs])[:-1]
    return tuple(np.split(g, sizes, axis=ax))


register("concat", _concat_f, _concat_b)


def _logdet_f(m):
    sign, logabs = np.linalg.slogdet(m)
    if sign <= 0:
        raise FloatingPointError("log-determinant of a matrix with non-positive determinant")
    return logabs, None


def _logdet_b(g, ctx, m):
    inv_t = np.linalg.inv(m).T
    return (g[:, None, None] * inv_t,)


register("logdet", _logdet_f, _logdet_b)


# ------------------------------------------------------------- public ops


def add(a, b):
    return _apply("add", a, b)


def neg(a):
    return _apply("neg", a)


def mul(a, b):
    return _apply("mul", a, b)


def log(a):
    """Saturating logarithm: ``log(0)`` maps to ``NEG_INF`` with zero gradient."""
    return _apply("log", a)


def exp(a):
    return _apply("exp", a)


def sigmoid(a):
    return _apply("sigmoid", a)


def clip(a, lo: float, hi: float):
    return _apply("clip", a, lo, hi)


def tnorm(a, b):
    return _apply("tnorm", a, b)


def tnorm_reduce(x, axis: int):
    return _apply("tnorm_reduce", x, axis=axis)


def tconorm2(a, b, alpha: float):
    return _apply("tconorm2", a, b, alpha=alpha)


def tconorm_reduce(x, alpha: float, axis: int, m: int | None = None):
    return _apply("tconorm_reduce", x, alpha=alpha, axis=axis, m=m)


def reduce_sum(x, axis=None):
    return _apply("sum", x, axis=axis)


def take(x, idx):
    return _apply("take", x, idx=idx)


def expand_dims(x, axis: int):
    return _apply("expand_dims", x, axis=axis)


def concat(xs: Sequence, axis: int):
    return _apply("concat", *xs, axis=axis)


def logdet(m):
    return _apply("logdet", m)


# ---------------------------------------------------------------- drivers


def value_and_grad(f: Callable[[Var], Var], theta) -> tuple[float, np.ndarray]:
    """Evaluate scalar ``f(theta)`` and its gradient in one reverse sweep."""
    values, grads = values_and_grads(lambda v: [f(v)], theta)
    return float(values[0]), grads[0]


def values_and_grads(f: Callable[[Var], Sequence], theta) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate several scalar outputs of ``f`` and their gradients.

    ``f`` returns a sequence of scalars; entries that are plain numbers
    (constants, or flagged values such as ``inf``) get a zero gradient.
    Returns ``(values, grads)`` with ``grads`` shaped ``(n_outputs, *theta.shape)``.
    """
    tape = Tape()
    var = tape.variable(theta)
    outs = list(f(var))
    values = np.array([float(value_of(o)) for o in outs])
    (grads,) = tape.gradient(outs, [var])
    return values, grads

"""Small reverse-mode autodiff over numpy arrays.

Nodes are whole arrays, not scalars. Every operation run inside an active
:class:`Tape` is appended to it, so the tape order is a topological order and
the backward sweep is a single reverse pass.

    with Tape() as tape:
        loss = ((x * x).sum())
    (gx,) = tape.backward(loss, [x])
"""

from __future__ import annotations

import numpy as np

from .errors import NumericFault, StateError

_active: list["Tape"] = []


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []
        self.loss: Var | None = None
        self._done = False

    def __enter__(self):
        _active.append(self)
        return self

    def __exit__(self, *exc):
        _active.remove(self)
        return False

    def record(self, node: "Var"):
        self.nodes.append(node)

    def backward(self, loss: "Var | None" = None, wrt=None) -> list[np.ndarray]:
        """Gradients of the scalar ``loss`` with respect to each entry of ``wrt``.

        Leaves with no path to the loss get zeros.
        """
        loss = loss if loss is not None else self.loss
        if loss is None or not self.nodes:
            raise StateError("backward called before any forward pass was recorded")
        if self._done:
            raise StateError("tape already consumed by a backward pass")
        if np.size(loss.value) != 1:
            raise StateError("loss must be a scalar")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
            if g is None or not node.parents:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                if not np.all(np.isfinite(contrib)):
                    raise NumericFault(f"non-finite gradient through '{node.op}'")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib
        self._done = True
        wrt = wrt if wrt is not None else []
        return [grads.get(id(v), np.zeros_like(v.value)) for v in wrt]


class Var:
    """An array value with the vector-Jacobian products of its parents."""

    __array_priority__ = 100

    def __init__(self, value, parents=(), op: str = "leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents = tuple(parents)
        self.op = op
        if _active:
            _active[-1].record(self)

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(value, op, pairs):
    """New node from ``value`` and ``(input, vjp)`` pairs; constants are dropped."""
    if not np.all(np.isfinite(value)):
        raise NumericFault(f"'{op}' produced non-finite values")
    parents = [(x, f) for x, f in pairs if isinstance(x, Var)]
    if not parents:
        return np.asarray(value, dtype=float)
    return Var(value, parents, op)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    av, bv = _val(a), _val(b)
    return _make(av + bv, "add", [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(g, bv.shape)),
    ])


def neg(a):
    return _make(-_val(a), "neg", [(a, lambda g: -g)])


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _make(av * bv, "mul", [
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    ])


def div(a, b):
    av, bv = _val(a), _val(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _make(out, "div", [
        (a, lambda g: _unbroadcast(g / bv, av.shape)),
        (b, lambda g: _unbroadcast(-g * out / bv, bv.shape)),
    ])


def power(a, p: float):
    av = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av**p
    return _make(out, "power", [(a, lambda g: g * p * av ** (p - 1))])


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(_val(a))
    return _make(out, "exp", [(a, lambda g: g * out)])


def log(a):
    av = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _make(out, "log", [(a, lambda g: g / av)])


def sqrt(a):
    with np.errstate(invalid="ignore"):
        out = np.sqrt(_val(a))
    with np.errstate(divide="ignore"):
        return _make(out, "sqrt", [(a, lambda g: g * 0.5 / out)])


def tanh(a):
    out = np.tanh(_val(a))
    return _make(out, "tanh", [(a, lambda g: g * (1.0 - out * out))])


def sigmoid(a):
    av = _val(a)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(av))
    out = np.where(av >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, "sigmoid", [(a, lambda g: g * out * (1.0 - out))])


def vsum(a, axis=None):
    av = _val(a)
    out = av.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _make(out, "sum", [(a, vjp)])


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv

    def ga(g):
        if bv.ndim == 1:
            return np.multiply.outer(g, bv) if av.ndim > 1 else g * bv
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape) if av.ndim > 1 else bv @ g

    def gb(g):
        if av.ndim == 1:
            return np.multiply.outer(av, g)
        if bv.ndim == 1:
            return np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)

    return _make(out, "matmul", [(a, ga), (b, gb)])


def transpose(a):
    return _make(_val(a).T, "transpose", [(a, lambda g: g.T)])


def reshape(a, shape):
    av = _val(a)
    return _make(av.reshape(shape), "reshape", [(a, lambda g: g.reshape(av.shape))])


def getitem(a, idx):
    av = _val(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _make(av[idx], "getitem", [(a, vjp)])


def stack(items, axis=0):
    vals = [_val(x) for x in items]
    out = np.stack(vals, axis=axis)
    pairs = [(x, (lambda g, i=i: np.take(g, i, axis=axis))) for i, x in enumerate(items)]
    return _make(out, "stack", pairs)


def concatenate(items, axis=0):
    vals = [_val(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    pairs = [
        (x, (lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis)))
        for x, lo, hi in zip(items, bounds[:-1], bounds[1:])
    ]
    return _make(out, "concatenate", pairs)


def cumsum(a, axis=0):
    out = np.cumsum(_val(a), axis=axis)

    def vjp(g):
        return np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis)

    return _make(out, "cumsum", [(a, vjp)])


def custom(value, op: str, pairs):
    """Register an externally computed primitive with hand-written VJPs."""
    return _make(np.asarray(value, dtype=float), op, pairs)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def forward(fn, *inputs):
    """Run ``fn`` on fresh leaves for ``inputs``; returns ``(loss, tape, leaves)``."""
    tape = Tape()
    with tape:
        leaves = [Var(np.array(x, dtype=float)) for x in inputs]
        loss = fn(*leaves)
    if not isinstance(loss, Var):
        loss = Var(loss)
    tape.loss = loss
    return loss, tape, leaves


def value_and_grad(fn, *inputs):
    loss, tape, leaves = forward(fn, *inputs)
    return float(loss.value), tape.backward(loss, leaves)


def grad_check(fn, point, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` maps one array (as a :class:`Var`) to a scalar. The denominator is
    ``max(|a|, |b|, 1e-8)`` per component.
    """
    point = np.array(point, dtype=float)
    _, (g,) = value_and_grad(fn, point)

    def f(x):
        return float(_val(fn(Var(x))))

    fd = np.zeros_like(point)
    flat, fdflat = point.reshape(-1), fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(point)
        flat[i] = orig - h
        fm = f(point)
        flat[i] = orig
        fdflat[i] = (fp - fm) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(g - fd) / denom))

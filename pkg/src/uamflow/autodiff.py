"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

The model code in this package is written against the helper functions below
(`tanh`, `sigmoid`, `matmul`, ...) which dispatch on their argument type:
plain ndarrays run through numpy directly (inference path), while ``Var``
wrappers record a tape and support ``backward()`` (training path). This keeps
every forward computation written exactly once.

Gradients are exact reverse-mode; correctness is pinned by finite-difference
checks in the test suite.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """A node in the autodiff graph wrapping a float64 ndarray."""

    # Make numpy defer to our reflected operators instead of broadcasting
    # over the object.
    __array_ufunc__ = None
    __slots__ = ("value", "grad", "_parents", "_vjps")

    def __init__(self, value, _parents=(), _vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # -- graph construction helpers --------------------------------------

    def _child(self, value, parents, vjps):
        return Var(value, tuple(parents), tuple(vjps))

    def __add__(self, other):
        if isinstance(other, Var):
            v = self.value + other.value
            return self._child(
                v,
                (self, other),
                (lambda g: _unbroadcast(g, self.value.shape),
                 lambda g: _unbroadcast(g, other.value.shape)),
            )
        o = np.asarray(other, dtype=np.float64)
        return self._child(self.value + o, (self,), (lambda g: _unbroadcast(g, self.value.shape),))

    __radd__ = __add__

    def __neg__(self):
        return self._child(-self.value, (self,), (lambda g: -g,))

    def __sub__(self, other):
        return self + (-other) if isinstance(other, Var) else self + (-np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            v = self.value * other.value
            return self._child(
                v,
                (self, other),
                (lambda g: _unbroadcast(g * other.value, self.value.shape),
                 lambda g: _unbroadcast(g * self.value, other.value.shape)),
            )
        o = np.asarray(other, dtype=np.float64)
        return self._child(self.value * o, (self,), (lambda g: _unbroadcast(g * o, self.value.shape),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other ** -1
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return self ** -1 * other

    def __pow__(self, exponent):
        p = float(exponent)
        v = self.value ** p
        return self._child(v, (self,), (lambda g: g * p * self.value ** (p - 1.0),))

    def __matmul__(self, other):
        if not isinstance(other, Var):
            other = Var(other)
        v = self.value @ other.value
        return self._child(
            v,
            (self, other),
            (lambda g: g @ other.value.T, lambda g: self.value.T @ g),
        )

    def __rmatmul__(self, other):
        return Var(other) @ self

    def __getitem__(self, idx):
        def vjp(g):
            full = np.zeros_like(self.value)
            np.add.at(full, idx, g)
            return full

        return self._child(self.value[idx], (self,), (vjp,))

    # -- backward ---------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable Var."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contribution = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad = parent.grad + contribution


def value_of(x):
    """Underlying ndarray of a Var, or the array itself."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def plain(params: dict) -> dict:
    """Ndarray view of a parameter dict, for tape-free inference."""
    return {k: value_of(v) for k, v in params.items()}


def _unary(x, fwd, make_vjp):
    if isinstance(x, Var):
        v = fwd(x.value)
        return x._child(v, (x,), (make_vjp(x.value, v),))
    return fwd(np.asarray(x, dtype=np.float64))


def tanh(x):
    return _unary(x, np.tanh, lambda xv, v: lambda g: g * (1.0 - v * v))


def sigmoid(x):
    def fwd(xv):
        return 1.0 / (1.0 + np.exp(-xv))

    return _unary(x, fwd, lambda xv, v: lambda g: g * v * (1.0 - v))


def exp(x):
    return _unary(x, np.exp, lambda xv, v: lambda g: g * v)


def log(x):
    return _unary(x, np.log, lambda xv, v: lambda g: g / xv)


def asum(x, axis=None):
    """Sum; named to avoid shadowing the builtin."""
    if isinstance(x, Var):
        v = x.value.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, x.value.shape).copy()
            ge = np.expand_dims(g, axis)
            return np.broadcast_to(ge, x.value.shape).copy()

        return x._child(v, (x,), (vjp,))
    return np.asarray(x, dtype=np.float64).sum(axis=axis)


def amean(x, axis=None):
    xv = value_of(x)
    n = xv.size if axis is None else xv.shape[axis]
    return asum(x, axis=axis) * (1.0 / n)


def concat(parts, axis=-1):
    if any(isinstance(p, Var) for p in parts):
        parts = [p if isinstance(p, Var) else Var(p) for p in parts]
        values = [p.value for p in parts]
        v = np.concatenate(values, axis=axis)
        sizes = [val.shape[axis] for val in values]
        offsets = np.cumsum([0] + sizes)

        def make_vjp(i):
            sl = [slice(None)] * v.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            sl = tuple(sl)
            return lambda g: g[sl]

        return Var(v, tuple(parts), tuple(make_vjp(i) for i in range(len(parts))))
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)


def reshape(x, shape):
    if isinstance(x, Var):
        v = x.value.reshape(shape)
        return x._child(v, (x,), (lambda g: g.reshape(x.value.shape),))
    return np.asarray(x, dtype=np.float64).reshape(shape)


def zeros(shape, like=None):
    """Zero array matching the graph/plain mode of ``like``."""
    z = np.zeros(shape, dtype=np.float64)
    return Var(z) if isinstance(like, Var) else z

"""Minimal reverse-mode autodiff over numpy arrays.

Each operation records its parents and a vector-Jacobian closure; a single
topological sweep accumulates gradients. Operations are array-level (matmul,
elementwise, reductions), so the tape stays small while running at numpy
speed. Accumulation order is fixed by construction order, which keeps
training trajectories bitwise reproducible.
"""

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    # Reverse numpy broadcasting: sum over added/stretched axes.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    return Tensor(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a, b):
    return Tensor(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def neg(a):
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    return Tensor(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def matmul(a, b):
    return Tensor(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def sum_all(a):
    return Tensor(a.value.sum(), (a,), lambda g: (np.full_like(a.value, g),))


def append_col(a, fill):
    """Append one constant column (1 for bias features, 0 for their tangents)."""
    n = a.value.shape[0]
    col = np.full((n, 1), float(fill))
    return Tensor(np.hstack([a.value, col]), (a,), lambda g: (g[:, :-1],))


def unary_from(a, value, local_grad):
    """Node with precomputed forward value and elementwise local derivative."""
    return Tensor(value, (a,), lambda g: (g * local_grad,))


def backward(loss):
    """Accumulate d(loss)/d(node) into ``.grad`` for every node in the graph."""
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.vjp is None:
            continue
        for parent, pgrad in zip(node.parents, node.vjp(node.grad)):
            parent.grad += pgrad

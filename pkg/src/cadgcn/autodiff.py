"""
Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation returns a new :class:`Tensor`; when at least one operand
requires a gradient the result remembers its parents and a closure that maps
the upstream gradient to one gradient per parent. :func:`backward` walks that
tape once in reverse topological order.
"""

import contextlib

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ContractError, ShapeError

LOG_FLOOR = 1e-12

_state = {"enabled": True}


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the tape."""
    prev = _state["enabled"]
    _state["enabled"] = False
    try:
        yield
    finally:
        _state["enabled"] = prev


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64, copy=True)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data.copy()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn, op):
    """Wrap ``data`` as the output of ``op``.

    ``backward_fn(g)`` must return one gradient (or None) per parent, each
    shaped like that parent's data.
    """
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.name = None
    out.grad = None
    out.op = op
    needs = _state["enabled"] and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "div")


def power(a, exponent):
    a = as_tensor(a)
    p = float(exponent)
    out = a.data**p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return make_node(out, (a,), bw, "pow")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_node(a.data @ b.data, (a, b), bw, "matmul")


def transpose(a):
    a = as_tensor(a)
    return make_node(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape):
    a = as_tensor(a)
    src = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), bw, "sum")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    """Natural log with the argument clamped below at ``LOG_FLOOR``."""
    a = as_tensor(a)
    clipped = np.maximum(a.data, LOG_FLOOR)

    def bw(g):
        return (np.where(a.data > LOG_FLOOR, g / clipped, 0.0),)

    return make_node(np.log(clipped), (a,), bw, "log")


def softplus(a):
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return make_node(out, (a,), lambda g: (g * expit(x),), "softplus")


def softmax_rows(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return make_node(out, (a,), bw, "softmax_rows")


def _scatter_rows(values, index, n):
    """out[k] = sum of values[e] over e with index[e] == k."""
    flat = values.reshape(len(index), -1)
    sel = sp.csr_matrix(
        (np.ones(len(index)), (index, np.arange(len(index)))), shape=(n, len(index))
    )
    out = np.asarray(sel @ flat)
    return out.reshape((n,) + values.shape[1:])


def gather_rows(a, index):
    """Rows of ``a`` picked by an integer index array (repeats allowed)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    return make_node(
        a.data[index], (a,), lambda g: (_scatter_rows(g, index, n),), "gather_rows"
    )


def segment_sum(a, index, n):
    """Adjoint of :func:`gather_rows`: accumulate rows of ``a`` into ``n`` slots."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    if len(index) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(index)} ids for {a.shape[0]} rows")
    return make_node(
        _scatter_rows(a.data, index, n), (a,), lambda g: (g[index],), "segment_sum"
    )


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, params=None):
    """Accumulate d(loss)/d(x) into ``x.grad`` for every leaf on the tape.

    Returns the gradients of ``params`` in order when given, else None.
    Leaves that the loss does not reach get a zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return None
    out = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        out.append(p.grad)
    return out


def zero_grad(params):
    for p in params:
        p.grad = None

"""Minimal reverse-mode autodiff on numpy arrays.

A ``Var`` is a node in a dynamically built computation graph: it holds the
forward value, the parent nodes, and a closure that maps the output cotangent
to parent cotangents (a vector-Jacobian product).  ``backward`` replays the
recorded graph in reverse topological order, accumulating ``.grad`` on every
node that requires gradients.  Leaf parameters persist across graph builds, so
calling ``backward`` on several losses accumulates their gradients (zero with
``zero_grads`` between optimizer steps).
"""

import numpy as np
from scipy.special import erf

# python floats, not np.float64 scalars: keeps float32 graphs float32
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class Var:
    """Graph node: forward value plus the recipe for its backward pass."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)


def param(data):
    """Leaf variable that collects gradients (a learnable tensor)."""
    return Var(np.asarray(data), requires_grad=True)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def node(data, parents, backward_fn):
    """Public graph-node constructor for ops defined outside this module."""
    req = any(p.requires_grad for p in parents)
    return Var(data, requires_grad=req,
               _parents=parents if req else (),
               _backward=backward_fn if req else None)


_node = node


def _unbroadcast(g, shape):
    """Reduce a cotangent back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _is_number(x):
    return isinstance(x, (int, float, np.integer, np.floating))


# python-number operands stay weak scalars (a 0-d float64 array would upcast
# float32 graphs under NumPy 2 promotion)

def add(a, b):
    if _is_number(b):
        a = as_var(a)
        b = float(b)  # numpy scalars are not weak under NEP 50
        return _node(a.data + b, (a,), lambda g: (g,))
    if _is_number(a):
        return add(b, a)
    a, b = as_var(a), as_var(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    if _is_number(b):
        return add(a, -b)
    if _is_number(a):
        return add(neg(b), a)
    a, b = as_var(a), as_var(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    if _is_number(b):
        a = as_var(a)
        b = float(b)
        return _node(a.data * b, (a,), lambda g: (g * b,))
    if _is_number(a):
        return mul(b, a)
    a, b = as_var(a), as_var(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape),
                            _unbroadcast(g * a.data, b.data.shape)))


def neg(a):
    a = as_var(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_var(a), as_var(b)
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def matvec(a, x):
    """(m,n) @ (n,) -> (m,); matmul's backward formulas assume 2D operands."""
    a, x = as_var(a), as_var(x)
    return _node(a.data @ x.data, (a, x),
                 lambda g: (np.outer(g, x.data), a.data.T @ g))


def matmul_t(a, b):
    """a @ b.T for 2D operands."""
    a, b = as_var(a), as_var(b)
    return _node(a.data @ b.data.T, (a, b),
                 lambda g: (g @ b.data, g.T @ a.data))


def reshape(a, shape):
    a = as_var(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(vars_, axis=0):
    vars_ = [as_var(v) for v in vars_]
    sizes = [v.data.shape[axis] for v in vars_]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(vars_)))

    return _node(np.concatenate([v.data for v in vars_], axis=axis), tuple(vars_), bwd)


def slice_axis0(a, start, stop):
    a = as_var(a)
    shape = a.data.shape

    def bwd(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[start:stop] = g
        return (out,)

    return _node(a.data[start:stop].copy(), (a,), bwd)


def sum_all(a):
    a = as_var(a)
    shape, dt = a.data.shape, a.data.dtype
    return _node(np.asarray(a.data.sum()), (a,),
                 lambda g: (np.broadcast_to(g.astype(dt), shape),))


def mean_all(a):
    a = as_var(a)
    shape, dt = a.data.shape, a.data.dtype
    n = a.data.size
    return _node(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to((g / n).astype(dt), shape),))


def sqrt(a):
    a = as_var(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * (0.5 / out),))


def exp(a):
    a = as_var(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def sigmoid(a):
    a = as_var(a)
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def gelu(a):
    """Exact (erf-based) GELU."""
    a = as_var(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = (x * cdf).astype(x.dtype)

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _node(out, (a,), bwd)


def softmax_last(a):
    """Softmax over the trailing axis (numerically stabilized)."""
    a = as_var(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), bwd)


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root, seed=None):
    """Accumulate d(root)/d(leaf) into .grad for all reachable leaves."""
    if not root.requires_grad:
        raise ValueError("backward on a graph with no gradient-requiring leaves")
    order = _toposort(root)
    root.grad = np.ones_like(root.data) if seed is None else np.asarray(seed)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for p, g in zip(node._parents, grads):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g


def zero_grads(vars_):
    for v in vars_:
        v.grad = None

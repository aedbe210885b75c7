"""Reverse-mode automatic differentiation over dense float64 arrays.

Every derived :class:`Tensor` records its parent tensors and a closure that
pushes gradients back to them.  ``backward`` on a scalar walks the recorded
graph once in reverse topological order; gradients accumulate additively
into ``grad`` and are cleared explicitly with ``zero_grad`` between steps.
``grad_check`` verifies any scalar-valued tensor function against central
finite differences.

Everything runs in double precision.  There is no in-place arithmetic on
gradient arrays, so a gradient array may be safely shared between nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ContractError, DegenerateInputError, ShapeMismatchError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Additive attention-mask value; exp(x) underflows to exactly 0.0 well
# before x reaches this, which is what makes masking bit-exact.
NEG_INF = -1e30


class Tensor:
    """Dense float64 value with optional additive gradient accumulation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """Constant copy sharing the same data, cut off from the graph."""
        return Tensor(self.data)

    def backward(self):
        """Populate ``grad`` on every reachable ``requires_grad`` ancestor.

        The root must be a scalar.  Gradients from repeated uses of a value
        are summed; repeated ``backward`` calls keep accumulating until the
        caller zeroes the gradients.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward requires a scalar root, got shape {self.data.shape}"
            )
        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}

        def push(parent, g):
            if not parent.requires_grad:
                return
            key = id(parent)
            cur = pending.get(key)
            pending[key] = g if cur is None else cur + g

        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is not None:
                node._backward(g, push)

    # -- operator sugar -------------------------------------------------

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return mul(self, power(other, -1.0))

    def __getitem__(self, key):
        return getitem(self, key)

    def scale(self, c: float) -> "Tensor":
        return scale(self, c)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _topological_order(root: Tensor) -> list:
    """Parents-before-children ordering of the graph reachable from root.

    Iterative so deep chains cannot hit the recursion limit; each node is
    visited exactly once.
    """
    order: list = []
    visited: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()


# -- elementwise and structural operations ------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g, push):
        push(a, _unbroadcast(g, a.data.shape))
        push(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g, push):
        push(a, _unbroadcast(g, a.data.shape))
        push(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g, push):
        push(a, _unbroadcast(g * b.data, a.data.shape))
        push(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = _wrap(a)
    c = float(c)

    def bwd(g, push):
        push(a, g * c)

    return _make(a.data * c, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatchError(
            f"matmul needs 2-D or batched operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatchError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )

    def bwd(g, push):
        push(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
        push(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))

    return _make(np.matmul(a.data, b.data), (a, b), bwd)


def gather(table: Tensor, ids) -> Tensor:
    """Select rows of a 2-D table by integer id; gradients scatter-add back."""
    ids = np.asarray(ids, dtype=np.int64)
    n_rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ContractError(f"row id out of range [0, {n_rows})")

    def bwd(g, push):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        push(table, buf)

    return _make(table.data[ids], (table,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]

    def bwd(g, push):
        offset = 0
        for t, n in zip(ts, sizes):
            key = [slice(None)] * g.ndim
            key[axis] = slice(offset, offset + n)
            push(t, g[tuple(key)])
            offset += n

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bwd)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)

    def bwd(g, push):
        push(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g, push):
        push(a, np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), (a,), bwd)


def getitem(a, key) -> Tensor:
    """Basic (slice/integer) indexing; fancy indexing is not supported."""
    a = _wrap(a)

    def bwd(g, push):
        buf = np.zeros_like(a.data)
        buf[key] = g
        push(a, buf)

    return _make(a.data[key], (a,), bwd)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)

    def bwd(g, push):
        if axis is None and not keepdims:
            gg = np.asarray(g).reshape((1,) * a.data.ndim)
        elif not keepdims:
            gg = np.expand_dims(g, axis)
        else:
            gg = g
        push(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / data.size

    def bwd(g, push):
        if axis is None and not keepdims:
            gg = np.asarray(g).reshape((1,) * a.data.ndim)
        elif not keepdims:
            gg = np.expand_dims(g, axis)
        else:
            gg = g
        push(a, np.broadcast_to(gg / count, a.data.shape).copy())

    return _make(data, (a,), bwd)


def log(a) -> Tensor:
    a = _wrap(a)

    def bwd(g, push):
        push(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def exp(a) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def bwd(g, push):
        push(a, g * data)

    return _make(data, (a,), bwd)


def power(a, p: float) -> Tensor:
    """Elementwise power with a fixed real exponent."""
    a = _wrap(a)
    p = float(p)

    def bwd(g, push):
        push(a, g * p * a.data ** (p - 1.0))

    return _make(a.data ** p, (a,), bwd)


def clamp_min(a, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x > floor."""
    a = _wrap(a)
    floor = float(floor)

    def bwd(g, push):
        push(a, g * (a.data > floor))

    return _make(np.maximum(a.data, floor), (a,), bwd)


def relu(a) -> Tensor:
    a = _wrap(a)

    def bwd(g, push):
        push(a, g * (a.data > 0))

    return _make(np.maximum(a.data, 0.0), (a,), bwd)


def gelu(a) -> Tensor:
    """Exact Gaussian-error-function form, 0.5 * x * (1 + erf(x / sqrt(2)))."""
    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def bwd(g, push):
        push(a, g * (cdf + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI))

    return _make(x * cdf, (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    """Probability-normalized exponentials, stabilized by max subtraction."""
    a = _wrap(a)
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g, push):
        push(a, p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return _make(p, (a,), bwd)


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; only used when a model config asks for it."""
    a = _wrap(a)
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def bwd(g, push):
        push(a, g * keep)

    return _make(a.data * keep, (a,), bwd)


# -- composites ----------------------------------------------------------


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply learned gain and bias."""
    mu = reduce_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = reduce_mean(mul(centered, centered), axis=-1, keepdims=True)
    inv_std = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv_std), gain), bias)


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """u.v / (|u||v|) for two 1-D tensors of matching length."""
    u, v = _wrap(u), _wrap(v)
    if u.data.ndim != 1 or v.data.ndim != 1 or u.data.shape != v.data.shape:
        raise ShapeMismatchError(
            f"cosine_similarity expects matching vectors, got {u.data.shape} and {v.data.shape}"
        )
    if not np.any(u.data) or not np.any(v.data):
        raise DegenerateInputError("cosine_similarity is undefined for zero-norm input")
    dot = reduce_sum(mul(u, v))
    norm_sq = mul(reduce_sum(mul(u, u)), reduce_sum(mul(v, v)))
    return mul(dot, power(norm_sq, -0.5))


# -- finite-difference verification --------------------------------------


@dataclass
class GradCheckReport:
    """Per-element comparison of analytic and central-difference gradients."""

    max_rel_error: float
    tolerance: float
    passed: bool
    rel_errors: list

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"grad_check {status}: max relative error {self.max_rel_error:.3e}"
            f" (tolerance {self.tolerance:.1e})"
        )


def grad_check(f, inputs, step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare backward() gradients of ``f(*inputs)`` against central differences.

    Elements where both gradients are below 1e-7 in magnitude count as exact
    agreement; at that scale the finite-difference quotient is pure roundoff.
    """
    inputs = list(inputs)
    zero_grads(inputs)
    out = f(*inputs)
    if out.data.size != 1:
        raise ContractError("grad_check expects a scalar-valued function")
    out.backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
    ]

    rel_errors = []
    for t, a in zip(inputs, analytic):
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(*inputs).item()
            flat[i] = orig - step
            lo = f(*inputs).item()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * step)
        magnitude = np.maximum(np.abs(a), np.abs(numeric))
        err = np.zeros_like(a)
        meaningful = magnitude >= 1e-7
        err[meaningful] = np.abs(a - numeric)[meaningful] / magnitude[meaningful]
        rel_errors.append(err)

    max_err = max((float(e.max()) for e in rel_errors if e.size), default=0.0)
    return GradCheckReport(
        max_rel_error=max_err,
        tolerance=tolerance,
        passed=max_err <= tolerance,
        rel_errors=rel_errors,
    )

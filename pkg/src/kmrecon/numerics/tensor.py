"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps an ndarray and, when produced by an operation, remembers
its parents and a backward rule.  Calling :func:`backward` on a scalar root
walks the recorded graph in reverse topological order and accumulates one
gradient array per ``requires_grad`` leaf, shape-matched to the leaf.

Tensors are treated as immutable values after construction; optimizers build
fresh tensors instead of mutating ``data`` in place.  Every operation checks
its output for NaN/Inf and raises :class:`NonFiniteError` so numerical
blow-ups surface at the op that produced them.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes; message names both operands."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _as_array(value, dtype):
    arr = np.asarray(value, dtype=dtype)
    return arr


def _check_finite(data, op_name):
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op_name} produced non-finite values")
    return data


class Tensor:
    """Dense real-valued tensor participating in a differentiable graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @classmethod
    def from_op(cls, data, parents, backward, op_name):
        """Create an op-output node.  ``backward(grad)`` returns one gradient
        array per parent (``None`` for parents that do not need one)."""
        _check_finite(data, op_name)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def clone(self, requires_grad=None):
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self.data.copy(), requires_grad=rg)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Convenience arithmetic used throughout model code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(value, like=None, dtype=None):
    """Non-trainable tensor; dtype follows ``like`` when given."""
    if dtype is None and like is not None:
        dtype = like.dtype
    return Tensor(_as_array(value, dtype))


def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return constant(x, like=like)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root, seed_grad=None):
    """Run reverse-mode accumulation from ``root``.

    ``root`` must be scalar unless ``seed_grad`` supplies the upstream
    gradient.  Gradients accumulate into ``tensor.grad`` of every
    ``requires_grad`` node reachable from the root.
    """
    if seed_grad is None:
        if root.size != 1:
            raise ShapeError(
                f"backward root must be scalar, got shape {root.shape}")
        seed_grad = np.ones_like(root.data)
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))

    grads = {id(root): np.asarray(seed_grad, dtype=root.dtype)}
    for node in reversed(topo):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.requires_grad and node._backward is None:
            # Leaf: accumulate.
            node.grad = grad if node.grad is None else node.grad + grad
            continue
        if node._backward is None:
            continue
        parent_grads = node._backward(grad)
        for parent, pgrad in zip(node._parents, parent_grads):
            if pgrad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pgrad
            else:
                grads[key] = pgrad


def gradients(root, leaves, seed_grad=None):
    """Backward pass returning one gradient array per leaf (zeros when the
    leaf is unreachable), shape-matched to the leaf."""
    for leaf in leaves:
        leaf.zero_grad()
    backward(root, seed_grad)
    out = []
    for leaf in leaves:
        if leaf.grad is None:
            out.append(np.zeros_like(leaf.data))
        else:
            out.append(leaf.grad)
    return out


# ---------------------------------------------------------------------------
# Elementwise and reduction primitives
# ---------------------------------------------------------------------------

def add(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return Tensor.from_op(data, (a, b), bwd, "add")


def sub(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return Tensor.from_op(data, (a, b), bwd, "sub")


def mul(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(grad):
        ga = _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(data, (a, b), bwd, "mul")


def scale(a, factor):
    factor = float(factor)
    data = a.data * factor

    def bwd(grad):
        return (grad * factor,)

    return Tensor.from_op(data, (a,), bwd, "scale")


def relu(a):
    data = np.maximum(a.data, 0)

    def bwd(grad):
        return (grad * (data > 0),)

    return Tensor.from_op(data, (a,), bwd, "relu")


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bwd(grad):
        ga = grad @ b.data.T if a.requires_grad else None
        gb = a.data.T @ grad if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(data, (a, b), bwd, "matmul")


def affine(x, w, b):
    """Fully connected map ``x @ w + b`` with ``x`` of shape (n, in)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"affine expects rank-2 x and w, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(
            f"affine: x {x.shape}, w {w.shape}, b {b.shape} are inconsistent")
    data = x.data @ w.data + b.data

    def bwd(grad):
        gx = grad @ w.data.T if x.requires_grad else None
        gw = x.data.T @ grad if w.requires_grad else None
        gb = grad.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return Tensor.from_op(data, (x, w, b), bwd, "affine")


def spatial_mean(x):
    """Mean over the spatial axes of (n, h, w, c) -> (n, c)."""
    if x.data.ndim != 4:
        raise ShapeError(f"spatial_mean expects (n, h, w, c), got {x.shape}")
    n, h, w, c = x.shape
    data = x.data.mean(axis=(1, 2))

    def bwd(grad):
        g = np.broadcast_to(grad[:, None, None, :] / (h * w), (n, h, w, c))
        return (np.ascontiguousarray(g),)

    return Tensor.from_op(data, (x,), bwd, "spatial_mean")


def mean_all(x):
    data = np.asarray(x.data.mean())

    def bwd(grad):
        return (np.broadcast_to(grad / x.size, x.shape).astype(x.dtype),)

    return Tensor.from_op(data, (x,), bwd, "mean_all")


def l1_loss(pred, target):
    """Mean absolute error; subgradient sign(pred - target)."""
    target = _coerce(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: pred {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    data = np.asarray(np.abs(diff).mean())
    sign = np.sign(diff)

    def bwd(grad):
        g = grad * sign / diff.size
        gt = -g if target.requires_grad else None
        return g, gt

    return Tensor.from_op(data, (pred, target), bwd, "l1_loss")


def concat(tensors, axis=1):
    shapes = [t.shape for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [s[axis] for s in shapes]
    offsets = np.cumsum([0] + sizes)

    def bwd(grad):
        return tuple(
            np.ascontiguousarray(np.take(grad, np.arange(offsets[i], offsets[i + 1]), axis=axis))
            for i in range(len(tensors)))

    return Tensor.from_op(data, tuple(tensors), bwd, "concat")


def narrow(x, axis, start, length):
    """Contiguous slice along ``axis``; backward scatters into zeros."""
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = np.ascontiguousarray(x.data[index])

    def bwd(grad):
        full = np.zeros_like(x.data)
        full[index] = grad
        return (full,)

    return Tensor.from_op(data, (x,), bwd, "narrow")


def reshape(x, shape):
    data = x.data.reshape(shape)

    def bwd(grad):
        return (grad.reshape(x.shape),)

    return Tensor.from_op(data, (x,), bwd, "reshape")

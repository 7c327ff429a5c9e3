"""Reverse-mode automatic differentiation on dense float64 numpy arrays.

A small tape-based engine: every differentiable op returns a new Tensor that
remembers its parents and a closure that routes the incoming gradient back to
them. Calling ``backward()`` on a scalar loss walks the tape in reverse
topological order. Everything is double precision so finite-difference checks
are meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; message names both shapes."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables tape recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A dense float64 array plus optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Reverse-mode pass from this tensor (typically a scalar loss)."""
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        _accum(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents, backward) -> Tensor:
    """Create an op output, recording on the tape only when useful."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward
        return out
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python/numpy constant (no gradient into the constant)."""
    c = np.asarray(c, dtype=np.float64)
    out = a.data * c

    def backward(g):
        _accum(a, _unbroadcast(g * c, a.data.shape))

    return _make(out, (a,), backward)


def shift(a: Tensor, c) -> Tensor:
    """Add a constant array (e.g. an additive attention mask)."""
    c = np.asarray(c, dtype=np.float64)
    out = a.data + c

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))

    return _make(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.data.shape} vs {b.data.shape}"
        )
    out = a.data @ b.data

    def backward(g):
        if b.data.ndim == 1:
            _accum(a, _unbroadcast(np.expand_dims(g, -1) * b.data, a.data.shape))
            ga = a.data.reshape(-1, a.data.shape[-1])
            _accum(b, ga.T @ g.reshape(-1))
            return
        if a.data.ndim == 1:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            _accum(b, _unbroadcast(np.outer(a.data, g) if b.data.ndim == 2
                                   else np.expand_dims(a.data, -1) * np.expand_dims(g, -2),
                                   b.data.shape))
            return
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _make(out, (a, b), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with w of shape (in, out), b of shape (out,)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"affine: input width {x.data.shape} does not match weight {w.data.shape}"
        )
    out = x.data @ w.data + b.data

    def backward(g):
        _accum(x, _unbroadcast(g @ w.data.T, x.data.shape))
        _accum(w, x.data.reshape(-1, x.data.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        _accum(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _make(out, (x, w, b), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding: id out of range for table {table.data.shape}"
        )
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, table.data.shape[1]))
        _accum(table, gt)

    return _make(out, (table,), backward)


def softmax(x: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Softmax with temperature; rows sum to 1 within 1e-12."""
    if temperature <= 0:
        raise ValueError("softmax temperature must be positive")
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(x, out * (g - dot) / temperature)

    return _make(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis."""
    if gamma.data.shape != (x.data.shape[-1],):
        raise ShapeError(
            f"layer_norm: gamma {gamma.data.shape} does not match input {x.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        n = x.data.shape[-1]
        dxhat = g * gamma.data
        dx = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        _accum(x, dx)
        _accum(gamma, (g * xhat).reshape(-1, n).sum(axis=0))
        _accum(beta, g.reshape(-1, n).sum(axis=0))

    return _make(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward(g):
        _accum(x, g * (x.data > 0))

    return _make(out, (x,), backward)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        _accum(x, g * (cdf + x.data * pdf))

    return _make(out, (x,), backward)


def masked_mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over the sequence axis (-2) restricted to mask==1 positions.

    x: (..., T, D); mask: (..., T) of {0,1}. Every row must have at least one
    active position.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.data.shape[:-1]:
        raise ShapeError(
            f"masked_mean_pool: mask {mask.shape} does not match input {x.data.shape}"
        )
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("masked_mean_pool: a row has no active positions")
    out = (x.data * mask[..., None]).sum(axis=-2) / counts

    def backward(g):
        _accum(x, (g / counts)[..., None, :] * mask[..., None])

    return _make(out, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + size)
            _accum(t, g[tuple(idx)])
            offset += size

    return _make(out, tuple(tensors), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    out = np.transpose(x.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accum(x, np.transpose(g, inverse))

    return _make(out, (x,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = x.data * keep

    def backward(g):
        _accum(x, g * keep)

    return _make(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward(g):
        _accum(x, np.broadcast_to(g, x.data.shape).astype(np.float64))

    return _make(out, (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.sum() / n)

    def backward(g):
        _accum(x, np.broadcast_to(g / n, x.data.shape).astype(np.float64))

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log softmax probability of the target classes.

    logits: (..., C); targets: integer array of shape (...). With a mask,
    only mask==1 positions contribute (mean over active positions).
    """
    targets = np.asarray(targets)
    c = logits.data.shape[-1]
    active = np.ones(targets.shape, dtype=np.float64) if mask is None \
        else np.asarray(mask, dtype=np.float64)
    check = targets[active.astype(bool)] if targets.ndim else targets
    if np.any(check < 0) or np.any(check >= c):
        raise ValueError(f"cross_entropy: target out of range [0, {c})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    tgt = np.where(active.astype(bool), targets, 0)
    picked = np.take_along_axis(logp, np.expand_dims(tgt, -1), axis=-1)[..., 0]
    count = active.sum()
    if count == 0:
        raise ValueError("cross_entropy: no active positions")
    out = np.asarray(-(picked * active).sum() / count)

    def backward(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, np.expand_dims(tgt, -1), 1.0, axis=-1)
        _accum(logits, g * (p - onehot) * active[..., None] / count)

    return _make(out, (logits,), backward)


def binary_cross_entropy_per_label(logits: Tensor, targets) -> Tensor:
    """Mean over labels of -[t log sigmoid(z) + (1-t) log(1 - sigmoid(z))]."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.data.shape:
        raise ShapeError(
            f"bce: targets {targets.shape} do not match logits {logits.data.shape}"
        )
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise ValueError("bce: targets must be binary (0/1)")
    z = logits.data
    # softplus(z) - t*z == t*softplus(-z) + (1-t)*softplus(z)
    losses = np.logaddexp(0.0, z) - targets * z
    n = losses.size
    out = np.asarray(losses.sum() / n)

    def backward(g):
        sig = 1.0 / (1.0 + np.exp(-z))
        _accum(logits, g * (sig - targets) / n)

    return _make(out, (logits,), backward)


def sigmoid_values(z: np.ndarray) -> np.ndarray:
    """Plain-numpy stable sigmoid (for scores, no gradient)."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out

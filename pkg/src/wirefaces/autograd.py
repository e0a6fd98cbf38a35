"""A small reverse-mode autodiff over numpy arrays.

Only the operations the pointer model needs are provided.  Each op builds a
:class:`Tensor` holding its parents and a closure that pushes the output
gradient back to them; :func:`backward` walks the graph in reverse
topological order.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


def const(arr) -> Tensor:
    return arr if isinstance(arr, Tensor) else Tensor(arr)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = const(a), const(b)

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a = const(a)
    if not isinstance(b, Tensor):
        s = float(b)

        def bw_scalar(g):
            a._accum(g * s)

        return Tensor(a.data * s, (a,), bw_scalar)

    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over the last two axes, with broadcasting."""

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor(a.data @ b.data, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` for x of shape (..., i) and w of shape (i, o)."""
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    if b is not None:
        out = out + b.data

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            x._accum((g2 @ w.data.T).reshape(x.shape))
        if w.requires_grad:
            w._accum(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out.reshape(*lead, w.shape[-1]), parents, bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        x._accum(g * mask)

    return Tensor(x.data * mask, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        x._accum(g.reshape(x.shape))

    return Tensor(x.data.reshape(shape), (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def bw(g):
        x._accum(np.transpose(g, inv))

    return Tensor(np.transpose(x.data, axes), (x,), bw)


def take(x: Tensor, idx) -> Tensor:
    """Rows of ``x`` (first axis) selected by an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, *x.shape[1:]))
        x._accum(full)

    return Tensor(x.data[idx], (x,), bw)


def concat(xs, axis=0) -> Tensor:
    xs = [const(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        for x, part in zip(xs, np.split(g, sizes, axis=axis)):
            x._accum(part)

    return Tensor(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), bw)


def softmax(x: Tensor, axis=-1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return Tensor(y, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        if gain.requires_grad:
            gain._accum(_unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            bias._accum(_unbroadcast(g, bias.shape))
        if x.requires_grad:
            gh = g * gain.data
            dx = (gh - gh.mean(axis=-1, keepdims=True)
                  - xhat * (gh * xhat).mean(axis=-1, keepdims=True)) * inv
            x._accum(dx)

    return Tensor(xhat * gain.data + bias.data, (x, gain, bias), bw)


def sequence_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray):
    """Mean over sequences of the mean token negative log-likelihood.

    ``logits`` is (B, T, S); ``targets`` and ``mask`` are (B, T).  Returns the
    loss tensor and the per-position log-probabilities of the targets.
    """
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    tgt = np.where(mask, targets, 0)
    picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
    lengths = mask.sum(axis=1)
    if np.any(lengths == 0):
        raise ValueError("empty target sequence")
    weights = mask / lengths[:, None] / mask.shape[0]
    loss = -(picked * weights).sum()

    def bw(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, tgt[..., None], 1.0, axis=-1)
        logits._accum(g * (p - onehot) * weights[..., None])

    return Tensor(loss, (logits,), bw), picked


def backward(loss: Tensor) -> None:
    order, seen = [], set()
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

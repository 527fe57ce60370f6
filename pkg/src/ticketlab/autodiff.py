"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps a float64 ndarray and records the operation that produced
it.  Calling ``backward()`` on a scalar Var walks the tape in reverse
topological order and accumulates gradients into every Var reachable from
it.  Only the handful of primitives needed for small MLPs and ConvNets are
implemented; each primitive carries its own backward closure.
"""

from __future__ import annotations

import numpy as np


class Var:
    """Node in the computation graph: a value, a gradient slot, parents."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Backpropagate from this (scalar) node through the whole graph."""
        if self.value.ndim != 0 and self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()

        def visit(v):
            if id(v) in seen:
                return
            seen.add(id(v))
            for p in v._parents:
                visit(p)
            order.append(v)

        visit(self)
        for v in order:
            v.grad = np.zeros_like(v.value)
        self.grad = np.ones_like(self.value)
        for v in reversed(order):
            if v._backward is not None:
                v._backward(v.grad)


def _accumulate(var, g):
    var.grad += g


def _unbroadcast(g, shape):
    """Sum gradient g down to the given original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Var, b: Var) -> Var:
    out_val = a.value + b.value

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    return Var(out_val, (a, b), bwd)


def matmul(a: Var, b: Var) -> Var:
    out_val = a.value @ b.value

    def bwd(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return Var(out_val, (a, b), bwd)


def relu(a: Var) -> Var:
    keep = a.value > 0.0
    out_val = np.where(keep, a.value, 0.0)

    def bwd(g):
        _accumulate(a, g * keep)

    return Var(out_val, (a,), bwd)


def reshape(a: Var, shape) -> Var:
    out_val = a.value.reshape(shape)

    def bwd(g):
        _accumulate(a, g.reshape(a.value.shape))

    return Var(out_val, (a,), bwd)


def _im2col(x, ksize, pad):
    """(N,C,H,W) -> (N*H*W, C*ksize*ksize) patch matrix, stride 1."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, h, w, c, ksize, ksize), dtype=x.dtype)
    for i in range(ksize):
        for j in range(ksize):
            cols[:, :, :, :, i, j] = xp[:, :, i:i + h, j:j + w].transpose(0, 2, 3, 1)
    return cols.reshape(n * h * w, c * ksize * ksize)


def _col2im(cols, xshape, ksize, pad):
    """Adjoint of _im2col: scatter patch gradients back onto the image."""
    n, c, h, w = xshape
    cols = cols.reshape(n, h, w, c, ksize, ksize)
    gxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(ksize):
        for j in range(ksize):
            gxp[:, :, i:i + h, j:j + w] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return gxp[:, :, pad:pad + h, pad:pad + w]


def conv2d(x: Var, weight: Var, bias: Var, ksize: int = 3) -> Var:
    """Same-padded stride-1 2D convolution.

    x: (N, C, H, W); weight: (OC, C, k, k); bias: (OC,).
    """
    pad = ksize // 2
    n, c, h, w = x.value.shape
    oc = weight.value.shape[0]
    cols = _im2col(x.value, ksize, pad)
    wmat = weight.value.reshape(oc, c * ksize * ksize)
    out = cols @ wmat.T + bias.value
    out_val = out.reshape(n, h, w, oc).transpose(0, 3, 1, 2)

    def bwd(g):
        gout = g.transpose(0, 2, 3, 1).reshape(n * h * w, oc)
        _accumulate(bias, gout.sum(axis=0))
        _accumulate(weight, (gout.T @ cols).reshape(weight.value.shape))
        _accumulate(x, _col2im(gout @ wmat, x.value.shape, ksize, pad))

    return Var(out_val, (x, weight, bias), bwd)


def avgpool2x2(x: Var) -> Var:
    """2x2 average pooling, stride 2; H and W must be even."""
    n, c, h, w = x.value.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2x2 needs even spatial dims, got {(h, w)}")
    r = x.value.reshape(n, c, h // 2, 2, w // 2, 2)
    out_val = r.mean(axis=(3, 5))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        _accumulate(x, gx)

    return Var(out_val, (x,), bwd)


def cross_entropy_mean(logits: Var, labels) -> Var:
    """Mean softmax cross-entropy over the batch; labels are int indices."""
    labels = np.asarray(labels)
    z = logits.value
    n = z.shape[0]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = lse - z[np.arange(n), labels]
    out_val = losses.mean()

    def bwd(g):
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, g * p / n)

    return Var(out_val, (logits,), bwd)

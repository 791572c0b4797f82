"""Differentiable primitives.

All operations accept Tensors (or array-likes, treated as constants) and
return new Tensors. Leading axes act as batch axes; the last axis is the
feature axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ._backend import kernels as _default_kernels
from .tensor import Tensor, as_tensor, record

_kernels = _default_kernels


def use_kernels(module):
    """Swap the kernel backend (compiled or ``_kernels_py``); returns the previous one."""
    global _kernels
    prev, _kernels = _kernels, module
    return prev


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _c(a):
    return np.ascontiguousarray(a)


def _pair(a, b):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = as_tensor(a, dtype=b.dtype)
    elif not isinstance(b, Tensor) and isinstance(a, Tensor):
        b = as_tensor(b, dtype=a.dtype)
    a, b = as_tensor(a), as_tensor(b)
    dt = np.result_type(a.data.dtype, b.data.dtype)
    if a.data.dtype != dt and not a.requires_grad:
        a = Tensor(a.data.astype(dt))
    if b.data.dtype != dt and not b.requires_grad:
        b = Tensor(b.data.astype(dt))
    return a, b


def add(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data - b.data
    except ValueError:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}") from None
    sa, sb = a.shape, b.shape
    return record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return record(out, (a, b), bw)


def matmul_t(x, W):
    """``x @ W.T`` for x of shape (..., n) and W of shape (m, n)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.data.ndim != 2 or x.data.shape[-1] != W.data.shape[1]:
        raise DimensionError(f"matmul_t: x {x.shape} does not conform to W {W.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd.T

    def bw(g):
        gx = g @ Wd if x.requires_grad else None
        gW = None
        if W.requires_grad:
            g2 = g.reshape(-1, g.shape[-1])
            x2 = xd.reshape(-1, xd.shape[-1])
            gW = g2.T @ x2
        return gx, gW

    return record(out, (x, W), bw)


def affine(x, W, b):
    """``x @ W.T + b``; x is (..., n), W is (m, n), b is (m,) or (1, m)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    m = W.shape[0] if W.data.ndim == 2 else None
    if W.data.ndim != 2 or x.data.shape[-1] != W.data.shape[1] or b.data.shape[-1:] != (m,) \
            or b.data.size != m:
        raise DimensionError(f"affine: x {x.shape}, W {W.shape}, b {b.shape} do not conform")
    if b.data.ndim == 2:
        b = reshape(b, (m,))
    return add(matmul_t(x, W), b)


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record(y, (x,), lambda g: (g * (1 - y * y),))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1 / (1 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1 + e)
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return record(y, (x,), lambda g: (g * y * (1 - y),))


def relu(x):
    x = as_tensor(x)
    keep = x.data > 0
    y = np.where(keep, x.data, 0).astype(x.data.dtype)
    return record(y, (x,), lambda g: (g * keep,))


def clamp_min(x, lo):
    """``max(x, lo)`` elementwise; gradient is zero where the floor is active."""
    x = as_tensor(x)
    keep = x.data > lo
    y = np.where(keep, x.data, lo).astype(x.data.dtype)
    return record(y, (x,), lambda g: (g * keep,))


def normalize(x, eps=1e-12):
    """Scale each vector along the last axis to unit L2 norm (``v / max(|v|, eps)``)."""
    x = as_tensor(x)
    shape = x.shape
    v = _c(x.data.reshape(-1, shape[-1]))
    out = np.empty_like(v)
    norms = np.empty(v.shape[0], dtype=v.dtype)
    k = _kernels
    k.normalize_rows(v, eps, out, norms)

    def bw(g):
        dv = np.empty_like(out)
        k.normalize_rows_backward(_c(g.reshape(out.shape)), out, norms, eps, dv)
        return (dv.reshape(shape),)

    return record(out.reshape(shape), (x,), bw)


def aggregate(msgs, adj):
    """Sum incoming messages: ``out[b, dst] = sum_src adj[b, dst, src] * msgs[b, src]``.

    ``adj`` is a constant array of shape (B, S, S).
    """
    msgs = as_tensor(msgs)
    m = _c(msgs.data)
    a = _c(np.asarray(adj, dtype=m.dtype))
    if m.ndim != 3 or a.shape != (m.shape[0], m.shape[1], m.shape[1]):
        raise DimensionError(f"aggregate: msgs {m.shape} vs adjacency {a.shape}")
    out = np.empty_like(m)
    k = _kernels
    k.aggregate(m, a, out)

    def bw(g):
        d = np.empty_like(m)
        k.aggregate_backward(_c(g), a, d)
        return (d,)

    return record(out, (msgs,), bw)


def gru_combine(z, h, c):
    """``(1 - z) * h + z * c`` elementwise, all operands of one shape."""
    z, h, c = as_tensor(z), as_tensor(h), as_tensor(c)
    if not (z.shape == h.shape == c.shape):
        raise DimensionError(f"gru_combine: shapes {z.shape}, {h.shape}, {c.shape}")
    shape = z.shape
    zd, hd, cd = (_c(t.data.reshape(-1, shape[-1])) for t in (z, h, c))
    out = np.empty_like(hd)
    k = _kernels
    k.gru_combine(zd, hd, cd, out)

    def bw(g):
        dz, dh, dc = np.empty_like(zd), np.empty_like(zd), np.empty_like(zd)
        k.gru_combine_backward(_c(g.reshape(zd.shape)), zd, hd, cd, dz, dh, dc)
        return dz.reshape(shape), dh.reshape(shape), dc.reshape(shape)

    return record(out.reshape(shape), (z, h, c), bw)


def gather_cols(W, idx):
    """Columns ``W[:, idx]`` laid out as shape ``idx.shape + (rows,)``."""
    W = as_tensor(W)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.moveaxis(W.data[:, idx], 0, -1)

    def bw(g):
        gw = np.zeros_like(W.data)
        flat = g.reshape(-1, W.shape[0])
        np.add.at(gw.T, idx.reshape(-1), flat)
        return (gw,)

    return record(np.ascontiguousarray(out), (W,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(out, tuple(tensors), bw)


def take(x, index):
    """Basic or advanced indexing with a scatter-add backward."""
    x = as_tensor(x)
    out = x.data[index]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return record(np.array(out), (x,), bw)


def expand_dims(x, axis):
    x = as_tensor(x)
    shape = x.shape
    return record(np.expand_dims(x.data, axis), (x,), lambda g: (g.reshape(shape),))


def softmax(x):
    x = as_tensor(x)
    if x.data.size == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax of an empty input")
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record(y, (x,), bw)


def log_softmax(x):
    x = as_tensor(x)
    if x.data.size == 0 or x.shape[-1] == 0:
        raise DimensionError("log_softmax of an empty input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return record(y, (x,), bw)


def sum(x):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    return record(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x):
    x = as_tensor(x)
    shape, n = x.shape, x.data.size
    return record(np.asarray(x.data.mean()), (x,),
                  lambda g: (np.broadcast_to(g / n, shape).astype(x.data.dtype),))


def scale(x, c):
    x = as_tensor(x)
    return record(x.data * c, (x,), lambda g: (g * c,))

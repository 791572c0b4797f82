"""Tape-based reverse-mode differentiation over numpy arrays.

A :class:`Tensor` wraps an immutable ndarray. Operations executed while a
:class:`Tape` is active, and touching at least one tensor that requires a
gradient, append a node to that tape. :func:`backward` replays the tape in
reverse exactly once.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractError, DimensionError

_DTYPES = {"f64": np.float64, "f32": np.float32}
_state = threading.local()


def resolve_dtype(precision):
    try:
        return _DTYPES[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected f32 or f64") from None


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, dtype={self.data.dtype})"

    # Operator sugar; the heavy lifting lives in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, index):
        from . import ops
        return ops.take(self, index)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; nested tapes shadow outer ones. A tape belongs
    to the thread that opened it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def active_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def record(out_data, parents, backward_fn):
    """Wrap ``out_data`` in a Tensor and log it on the active tape if needed.

    ``backward_fn(grad)`` must return one gradient (or None) per parent.
    """
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(out, parents, backward_fn))
    return out


def backward(tape, loss, params=None):
    """Reverse sweep over ``tape`` starting from the scalar ``loss``.

    Returns ``{id(tensor): grad}`` for every leaf reached, or, when ``params``
    (a mapping name -> Tensor) is given, ``{name: grad}`` with zeros for
    parameters the loss never touched.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        pgrads = node.backward(g)
        for parent, pg in zip(node.parents, pgrads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            leaves[key] = parent
    if params is None:
        return {k: v for k, v in grads.items() if k in leaves}
    out = {}
    for name, p in params.items():
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} != value shape {p.data.shape} for {name}")
        out[name] = g
    return out

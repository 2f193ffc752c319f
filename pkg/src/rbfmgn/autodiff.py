"""Reverse-mode automatic differentiation over float64 numpy arrays.

A tiny tape: every operation builds a Tensor that remembers its parents and
how to push a gradient back to them. ``backward`` walks the graph once in
reverse topological order. Only what the network and the physics loss need
is implemented; everything stays dense float64 for bit-for-bit determinism.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "concat",
    "gather",
    "matmul",
    "mul",
    "relu",
    "reshape",
    "scale",
    "scatter_sum",
    "slice_rows",
    "sqrt",
    "square",
    "stencil_matvec",
    "sub",
    "tensor_sum",
    "as_tensor",
]


class Tensor:
    """Array node on the tape. ``grad`` is filled by ``backward``."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_push")

    def __init__(self, value, requires_grad=False, _parents=(), _push=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self._parents = _parents
        self._push = _push

    @property
    def shape(self):
        return self.value.shape

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) node into the whole tape."""
        if self.value.ndim != 0:
            raise ValueError("backward starts from a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.array(1.0)
        for node in reversed(order):
            if node._push is not None and node.grad is not None:
                node._push(node.grad)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient g down to the given (possibly broadcast) shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, _parents=(a, b))

    def push(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.value.shape))

    out._push = push
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value - b.value, _parents=(a, b))

    def push(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.value.shape))

    out._push = push
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value * b.value, _parents=(a, b))

    def push(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    out._push = push
    return out


def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    out = Tensor(a.value * s, _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(g * s)

    out._push = push
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value @ b.value, _parents=(a, b))

    def push(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    out._push = push
    return out


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0.0
    out = Tensor(np.where(mask, a.value, 0.0), _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(np.where(mask, g, 0.0))

    out._push = push
    return out


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.value for p in parts], axis=axis),
                 _parents=tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def push(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    out._push = push
    return out


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup a[idx]; duplicate indices sum their gradients back."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=int)
    out = Tensor(a.value[idx], _parents=(a,))

    def push(g):
        if a.requires_grad:
            acc = np.zeros_like(a.value)
            np.add.at(acc, idx, g)
            a._accumulate(acc)

    out._push = push
    return out


def scatter_sum(a: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """out[k] = sum of rows of a where idx == k (message aggregation)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=int)
    val = np.zeros((n_rows,) + a.value.shape[1:])
    np.add.at(val, idx, a.value)
    out = Tensor(val, _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(g[idx])

    out._push = push
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value[start:stop], _parents=(a,))

    def push(g):
        if a.requires_grad:
            acc = np.zeros_like(a.value)
            acc[start:stop] = g
            a._accumulate(acc)

    out._push = push
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.reshape(shape), _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.value.shape))

    out._push = push
    return out


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value**2, _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(2.0 * a.value * g)

    out._push = push
    return out


def tensor_sum(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.sum(), _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.value, float(g)))

    out._push = push
    return out


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    root = np.sqrt(a.value)
    out = Tensor(root, _parents=(a,))

    def push(g):
        if a.requires_grad:
            a._accumulate(g / (2.0 * np.maximum(root, 1e-300)))

    out._push = push
    return out


def stencil_matvec(vals: np.ndarray, cols: np.ndarray, u: Tensor) -> Tensor:
    """Rows of a stencil operator applied to a per-node vector.

    ``vals``/``cols`` are the constant (rows, m) weight and index arrays;
    only ``u`` participates in differentiation. The adjoint scatters each
    row's weights back onto its neighbor slots.
    """
    u = as_tensor(u)
    if u.value.ndim != 1:
        raise ValueError("stencil_matvec expects a flat per-node vector")
    out = Tensor((vals * u.value[cols]).sum(axis=1), _parents=(u,))

    def push(g):
        if u.requires_grad:
            acc = np.zeros_like(u.value)
            np.add.at(acc, cols, vals * g[:, None])
            u._accumulate(acc)

    out._push = push
    return out

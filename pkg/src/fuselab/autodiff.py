"""Reverse-mode automatic differentiation over float64 numpy arrays.

A small tape: each operation records its parent tensors and one
vector-Jacobian product per parent; ``backward`` walks the tape once in
reverse topological order. Only the operations the model family needs are
implemented. Constants (plain ndarrays or scalars) never enter the tape.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient axes added or stretched by numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if squeezed:
        grad = grad.sum(axis=squeezed, keepdims=True)
    return grad


class Tensor:
    """One node of the computation graph wrapping a float64 array."""

    __slots__ = ("data", "grad", "_parents", "_vjps")

    def __init__(
        self,
        data,
        _parents: tuple["Tensor", ...] = (),
        _vjps: tuple[Callable[[Array], Array], ...] = (),
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    # ----- elementwise arithmetic -------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(
                self.data + other.data,
                (self, other),
                (
                    lambda g: _unbroadcast(g, self.shape),
                    lambda g: _unbroadcast(g, other.shape),
                ),
            )
        else:
            const = np.asarray(other, dtype=np.float64)
            out = Tensor(
                self.data + const,
                (self,),
                (lambda g: _unbroadcast(g, self.shape),),
            )
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), (lambda g: -g,))

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(
                self.data * other.data,
                (self, other),
                (
                    lambda g: _unbroadcast(g * other.data, self.shape),
                    lambda g: _unbroadcast(g * self.data, other.shape),
                ),
            )
        else:
            const = np.asarray(other, dtype=np.float64)
            out = Tensor(
                self.data * const,
                (self,),
                (lambda g: _unbroadcast(g * const, self.shape),),
            )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a reciprocal constant")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    # ----- matmul ------------------------------------------------------

    def __matmul__(self, other: "Tensor") -> "Tensor":
        if not isinstance(other, Tensor):
            other = Tensor(other)
        a, b = self.data, other.data

        def vjp_a(g: Array) -> Array:
            return _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), self.shape)

        def vjp_b(g: Array) -> Array:
            return _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), other.shape)

        return Tensor(np.matmul(a, b), (self, other), (vjp_a, vjp_b))

    # ----- shape ops ----------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor(
            self.data.reshape(shape), (self,), (lambda g: g.reshape(src),)
        )

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor(
            self.data.transpose(axes), (self,), (lambda g: g.transpose(inv),)
        )

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ValueError(".T is defined for 2-D tensors only")
        return self.transpose(1, 0)

    def __getitem__(self, key) -> "Tensor":
        src = self.shape

        def vjp(g: Array) -> Array:
            buf = np.zeros(src, dtype=np.float64)
            buf[key] = g
            return buf

        return Tensor(self.data[key], (self,), (vjp,))

    # ----- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self.shape

        def vjp(g: Array) -> Array:
            if axis is None:
                return np.broadcast_to(g, src).copy()
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            return np.broadcast_to(gg, src).copy()

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), (vjp,))

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            scale = 1.0 / self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            scale = 1.0 / float(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * scale


# ----- nonlinear elementwise functions ---------------------------------


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)
    return Tensor(y, (t,), (lambda g: g * (1.0 - y * y),))


def exp(t: Tensor) -> Tensor:
    y = np.exp(t.data)
    return Tensor(y, (t,), (lambda g: g * y,))


def log(t: Tensor) -> Tensor:
    return Tensor(np.log(t.data), (t,), (lambda g: g / t.data,))


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    x = t.data
    m = x.max(axis=axis, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def vjp(g: Array) -> Array:
        return g - np.exp(y) * g.sum(axis=axis, keepdims=True)

    return Tensor(y, (t,), (vjp,))


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    x = t.data
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: Array) -> Array:
        return s * (g - (g * s).sum(axis=axis, keepdims=True))

    return Tensor(s, (t,), (vjp,))


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along one axis."""
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def make_vjp(i: int):
        def vjp(g: Array) -> Array:
            return np.split(g, splits, axis=axis)[i]

        return vjp

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        tuple(make_vjp(i) for i in range(len(tensors))),
    )


# ----- gather / scatter --------------------------------------------------


def take_rows(t: Tensor, ids: Array) -> Tensor:
    """Row lookup ``t[ids]`` for an integer index array (embedding gather)."""
    ids = np.asarray(ids)
    src = t.shape

    def vjp(g: Array) -> Array:
        buf = np.zeros(src, dtype=np.float64)
        np.add.at(buf, ids, g)
        return buf

    return Tensor(t.data[ids], (t,), (vjp,))


def take_last_axis(t: Tensor, idx: Array) -> Tensor:
    """Pick one entry per row along the last axis, ``idx.shape == t.shape[:-1]``."""
    idx = np.asarray(idx)
    picked = np.take_along_axis(t.data, idx[..., None], axis=-1)[..., 0]
    src = t.shape

    def vjp(g: Array) -> Array:
        buf = np.zeros(src, dtype=np.float64)
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        return buf

    return Tensor(picked, (t,), (vjp,))


# ----- backward pass ------------------------------------------------------


def backward(root: Tensor) -> None:
    """Accumulate ``grad`` on every tensor reachable from ``root``.

    ``root`` must be scalar-shaped; its gradient is seeded with ones.
    """
    if root.data.size != 1:
        raise ValueError("backward() expects a scalar root")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = contrib
            else:
                parent.grad = parent.grad + contrib

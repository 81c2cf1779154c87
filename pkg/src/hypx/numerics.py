"""Seeded sampling and a small reverse-mode gradient engine.

Tensors are plain float64 numpy arrays.  The graph layer wraps them in
:class:`Node` objects that record the operation that produced them, so a
scalar loss can be differentiated with :func:`backward`.
"""

from __future__ import annotations

import zlib
from typing import Iterable, Sequence

import numpy as np


class InvalidDimensionError(ValueError):
    """Raised when an array has the wrong size or shape for an operation."""


class ContractError(ValueError):
    """Raised when an operation is called outside its documented contract."""


class ConfigurationError(ValueError):
    """Raised for unknown or inconsistent configuration values."""


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def _label_key(label: str | int) -> int:
    if isinstance(label, int):
        return label
    return zlib.crc32(label.encode("utf-8"))


class RngStream:
    """A reproducible random stream backed by the counter-based Philox generator.

    Streams are identified by ``seed`` plus a path of labels, so
    ``RngStream(3).fork("env")`` always yields the same sequence no matter
    which other streams were created first.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def fork(self, label: str | int) -> "RngStream":
        return RngStream(self.seed, self._path + (_label_key(label),))

    def normal(self, size=None, scale: float = 1.0):
        return self.generator.normal(0.0, scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def random(self) -> float:
        return float(self.generator.random())

    def choice(self, p: np.ndarray) -> int:
        # inverse-cdf draw so the consumed randomness is one uniform
        cdf = np.cumsum(p)
        u = self.generator.random() * cdf[-1]
        return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._path})"


def sample_gaussian(rng: RngStream, n: int) -> np.ndarray:
    """Draw ``n`` independent standard normal values."""
    if n < 1:
        raise InvalidDimensionError(f"need n >= 1, got {n}")
    return rng.normal(size=n)


def sample_hypersphere(rng: RngStream, n: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the unit sphere in R^n via a normalized Gaussian.

    With ``size`` given, returns a ``(size, n)`` array of independent rows.
    """
    if n < 1:
        raise InvalidDimensionError(f"need n >= 1, got {n}")
    shape = (n,) if size is None else (size, n)
    g = rng.normal(size=shape)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    # a zero draw has probability zero; redraw just in case
    while np.any(norms == 0.0):
        bad = (norms == 0.0).reshape(-1)
        g.reshape(-1, n)[bad] = rng.normal(size=(int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norms


def sample_truncated_gaussian(rng: RngStream, shape, std: float, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std^2) draws truncated to ``[-bound*std, bound*std]`` by resampling."""
    out = rng.normal(size=shape, scale=std)
    flat = out.reshape(-1)
    bad = np.abs(flat) > bound * std
    while bad.any():
        flat[bad] = rng.normal(size=int(bad.sum()), scale=std)
        bad = np.abs(flat) > bound * std
    return out


def glorot_uniform(rng: RngStream, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# Computation graph
# ---------------------------------------------------------------------------


class Node:
    """One vertex of a computation graph.

    ``op`` is the operation tag, ``parents`` the input nodes, ``value`` the
    forward result and ``grad`` the adjoint filled in by :func:`backward`.
    Constants carry ``requires_grad=False`` and are never given an adjoint.
    """

    __slots__ = ("op", "parents", "value", "grad", "requires_grad", "_vjp")

    def __init__(self, value, op="input", parents=(), vjp=None, requires_grad=True):
        self.op = op
        self.parents = parents
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._vjp = vjp

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_node(other), -1.0))

    def __rsub__(self, other):
        return add(_as_node(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        if isinstance(c, Node):
            raise TypeError("elementwise node*node is not supported; use dot()")
        return scale(self, c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_as_node(other), self)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.shape})"


def variable(value) -> Node:
    """An input node that receives a gradient."""
    return Node(np.asarray(value, dtype=np.float64), "input")


def constant(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64), "input", requires_grad=False)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _node(value, op, parents, vjp) -> Node:
    return Node(value, op, parents, vjp, any(p.requires_grad for p in parents))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value + b.value,
        "add",
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def scale(a: Node, c) -> Node:
    """Multiply by a constant scalar or a constant array (broadcast)."""
    if isinstance(c, Node):
        raise TypeError("scale factor must be a constant")
    sa = a.shape
    if np.ndim(c) == 0:
        c = float(c)
        return _node(a.value * c, "scale", (a,), lambda g: (g * c,))
    c = np.asarray(c, dtype=np.float64)
    return _node(a.value * c, "scale", (a,), lambda g: (_unbroadcast(g * c, sa),))


def matmul(a, b) -> Node:
    """``a @ b`` with numpy's batched broadcasting rules (both operands >= 2-D)."""
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise InvalidDimensionError("matmul operands must be at least 2-D")
    sa, sb = av.shape, bv.shape

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), sa)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, sb)
        return ga, gb

    return _node(av @ bv, "matmul", (a, b), vjp)


def relu(a: Node) -> Node:
    mask = a.value > 0.0
    return _node(np.maximum(a.value, 0.0), "relu", (a,), lambda g: (g * mask,))


def square(a: Node) -> Node:
    v = a.value
    return _node(v * v, "square", (a,), lambda g: (2.0 * v * g,))


def sum(a: Node, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _node(np.sum(a.value, axis=axis, keepdims=keepdims), "sum", (a,), vjp)


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return _node(out, "exp", (a,), lambda g: (g * out,))


def divide(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    out = av / bv
    sa, sb = av.shape if np.ndim(av) else (), bv.shape if np.ndim(bv) else ()
    return _node(
        out,
        "divide",
        (a, b),
        lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * out / bv, sb)),
    )


def dot(a, b) -> Node:
    """Inner product along the last axis, broadcasting leading axes."""
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    if av.shape[-1] != bv.shape[-1]:
        raise InvalidDimensionError(f"dot: {av.shape} vs {bv.shape}")
    sa, sb = av.shape, bv.shape

    def vjp(g):
        g = np.expand_dims(g, -1)
        return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)

    return _node(np.sum(av * bv, axis=-1), "dot", (a, b), vjp)


# structural helpers used to unpack flat parameter vectors


def reshape(a: Node, shape) -> Node:
    sa = a.shape
    return _node(a.value.reshape(shape), "reshape", (a,), lambda g: (g.reshape(sa),))


def take(a: Node, start: int, stop: int) -> Node:
    """Slice ``[start:stop]`` along the last axis."""
    sa = a.shape

    def vjp(g):
        out = np.zeros(sa)
        out[..., start:stop] = g
        return (out,)

    return _node(a.value[..., start:stop], "take", (a,), vjp)


def transpose(a: Node) -> Node:
    """Swap the last two axes."""
    return _node(np.swapaxes(a.value, -1, -2), "transpose", (a,), lambda g: (np.swapaxes(g, -1, -2),))


def _topological_order(output: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Node) -> dict[Node, np.ndarray]:
    """Accumulate d(output)/d(node) into ``node.grad`` for every upstream node.

    Returns a mapping from each differentiable input node to its gradient.
    """
    if np.size(output.value) != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    order = _topological_order(output)
    for node in order:
        node.grad = None
    output.grad = np.ones_like(output.value)
    grads: dict[Node, np.ndarray] = {}
    for node in reversed(order):
        g = node.grad
        if node.op == "input":
            if node.requires_grad:
                grads[node] = g if g is not None else np.zeros_like(node.value)
            continue
        if g is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    return grads


def gradients(output: Node, inputs: Sequence[Node]) -> list[np.ndarray]:
    grads = backward(output)
    return [grads.get(x, np.zeros_like(x.value)) for x in inputs]


def finite_difference_gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    out = np.empty_like(x)
    flat, gflat = x.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """``|a - b| / max(|a|, |b|, floor)`` in the Euclidean norm of the whole array.

    Elementwise ratios blow up on components that are zero up to rounding,
    so the comparison is made on the arrays as vectors.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom


def as_vector(values: Iterable[float]) -> np.ndarray:
    return np.asarray(list(values), dtype=np.float64)

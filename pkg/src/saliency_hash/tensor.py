"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Every differentiable operation records
its parents and a closure mapping the output gradient to input gradients; the
recorded graph, visited in reverse topological order, is the tape replayed by
:meth:`Tensor.backward`.
"""
from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_state = threading.local()

DEFAULT_DTYPE = np.float32


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def record_branches():
    """Collect the branch pattern of the non-smooth ops run inside the block.

    ReLU masks, max/argmax choices and the zero set of ``sqrt`` are appended
    to the yielded list. Two evaluations with equal patterns lie on the same
    smooth piece of the function.
    """
    prev = getattr(_state, "branches", None)
    log: list[np.ndarray] = []
    _state.branches = log
    try:
        yield log
    finally:
        _state.branches = prev


def note_branch(pattern: np.ndarray) -> None:
    log = getattr(_state, "branches", None)
    if log is not None:
        log.append(np.array(pattern, copy=True))


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``.

    ``seed`` may be a sequence of non-negative ints, which lets callers derive
    independent streams such as ``(run_seed, image_id)``.
    """
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    if any(s < 0 for s in entropy):
        raise ContractError(f"seed must be non-negative, got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _check_shape(shape: Iterable[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if not shape or any(d <= 0 for d in shape):
        raise ShapeError(f"all dimensions must be positive, got {shape}")
    return shape


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` standard-normal float64 samples from uniform draws of ``rng``."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    return np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])[:n]


def randn_seeded(shape, seed, dtype=None) -> "Tensor":
    """Standard-normal tensor from a Philox stream via Box-Muller.

    Identical ``shape`` and ``seed`` give bit-identical values.
    """
    shape = _check_shape(shape)
    n = math.prod(shape)
    values = box_muller(make_rng(seed), n).reshape(shape)
    return Tensor(values.astype(dtype or DEFAULT_DTYPE))


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.generic) and np.issubdtype(data.dtype, np.floating):
        data = np.asarray(data)  # full reductions yield numpy scalars; keep their precision
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data if dtype is None else data.astype(dtype, copy=False)
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing right-aligned broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a} and {b}") from None


class Tensor:
    """N-dimensional array with an optional gradient.

    Args:
        data: array-like values. Floating numpy arrays keep their dtype; any
            other input is converted to the default (single) precision.
        requires_grad: mark as a leaf whose gradient should be populated.
    """

    __array_ufunc__ = None  # ndarray <op> Tensor defers to the Tensor operator

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data: np.ndarray = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        """Wrap an op result, recording it on the graph if any parent needs grad."""
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # -- elementwise arithmetic ---------------------------------------------
    def __add__(self, other) -> "Tensor":
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return add(self, -self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return add(self._lift(other), -self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return mul(self, self._lift(1.0 / other))

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, self._lift(other))

    # -- shape ops ----------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {src} into {shape}") from None
        return Tensor.from_op(out, (self,), lambda g: (g.reshape(src),))

    def flatten(self) -> "Tensor":
        """Collapse every axis after the first (row-major, channel-major for NCHW)."""
        return self.reshape(self.shape[0], -1)

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError("transpose is defined for matrices only")
        return Tensor.from_op(self.data.T, (self,), lambda g: (g.T,))

    # -- reductions ---------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src).copy(),)

        return Tensor.from_op(np.asarray(out, dtype=self.dtype), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = range(self.ndim) if axis is None else np.atleast_1d(axis)
        count = math.prod(self.shape[a] for a in axes)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        """Maximum along one axis; gradient goes to the first maximal index."""
        axis = axis % self.ndim
        idx = np.expand_dims(self.data.argmax(axis=axis), axis)
        note_branch(idx)
        out = np.take_along_axis(self.data, idx, axis=axis)
        src = self.shape

        def backward(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            grad = np.zeros(src, dtype=g.dtype)
            np.put_along_axis(grad, idx, g, axis=axis)
            return (grad,)

        return Tensor.from_op(out if keepdims else out.squeeze(axis), (self,), backward)

    # -- activations --------------------------------------------------------
    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    # -- autodiff -----------------------------------------------------------
    def backward(self) -> None:
        """Reverse accumulation from this scalar to every reachable leaf.

        Leaf gradients are overwritten, not accumulated, so each call on a
        fresh graph is independent of earlier calls. A leaf reached along
        several paths (e.g. shared siamese weights) receives the sum.
        """
        if self.size != 1:
            raise ContractError(f"backward needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("tensor is not attached to a differentiation graph")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def add(a: Tensor, b: Tensor) -> Tensor:
    broadcast_shape(a.shape, b.shape)
    return Tensor.from_op(
        a.data + b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    broadcast_shape(a.shape, b.shape)
    return Tensor.from_op(
        a.data * b.data, (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b)
    raise ContractError(f"unknown elementwise op {op!r}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    return Tensor.from_op(
        a.data @ b.data, (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # gradient at exactly 0 is 0
    note_branch(mask)
    return Tensor.from_op(np.maximum(x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))  # NaN propagates


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(v.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1 - s),))


def activation(kind: str, x: Tensor) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "linear":
        return x
    raise ContractError(f"unknown activation {kind!r}")


def sqrt(x: Tensor) -> Tensor:
    """Square root with the subgradient at 0 taken as 0."""
    s = np.sqrt(x.data)
    note_branch(s > 0)
    safe = np.where(s > 0, s, 1)

    def backward(g):
        return (np.where(s > 0, g / (2 * safe), 0).astype(g.dtype, copy=False),)

    return Tensor.from_op(s, (x,), backward)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))

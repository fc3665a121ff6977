"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array and records the operations applied to it on
an implicit tape (the graph of ``_parents`` links). Calling ``backward`` on a
scalar result walks the tape in reverse topological order and accumulates
``grad`` buffers on every tensor with ``requires_grad=True``. Gradients add
across multiple uses of the same tensor; call ``zero_grad`` between steps.

Recording is controlled by a module-level switch (see ``no_grad``) and is
meant to be confined to a single thread of control per training step.
Tensors that are not being recorded are safe to share read-only.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError

__all__ = ["Tensor", "Parameter", "no_grad", "is_grad_enabled", "backward",
           "concat", "stack", "finite_diff_gradient"]

_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                 backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = cls(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(g, self.data.shape)

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- backward pass ---------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) on every upstream ``requires_grad`` tensor.

        ``self`` must be a scalar produced by a recorded computation.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.data.shape}")
        order = self._toposort()
        self._accumulate(np.ones_like(self.data))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _toposort(self) -> list:
        # Iterative post-order DFS; BPTT graphs exceed the recursion limit.
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        order.reverse()
        return order

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other)
        def back(g):
            self._accumulate(g)
            other._accumulate(g)
        return Tensor._from_op(self.data + other.data, (self, other), back)

    __radd__ = __add__

    def __mul__(self, other):
        other = Tensor._lift(other)
        def back(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)
        return Tensor._from_op(self.data * other.data, (self, other), back)

    __rmul__ = __mul__

    def __sub__(self, other):
        other = Tensor._lift(other)
        def back(g):
            self._accumulate(g)
            other._accumulate(-g)
        return Tensor._from_op(self.data - other.data, (self, other), back)

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __neg__(self):
        def back(g):
            self._accumulate(-g)
        return Tensor._from_op(-self.data, (self,), back)

    def __truediv__(self, other):
        other = Tensor._lift(other)
        def back(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * self.data / (other.data * other.data))
        return Tensor._from_op(self.data / other.data, (self, other), back)

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("only scalar exponents are supported")
        def back(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))
        return Tensor._from_op(self.data ** exponent, (self,), back)

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ContractError("matmul requires tensors with ndim >= 2")
        def back(g):
            self._accumulate(np.matmul(g, np.swapaxes(b, -1, -2)))
            other._accumulate(np.matmul(np.swapaxes(a, -1, -2), g))
        return Tensor._from_op(np.matmul(a, b), (self, other), back)

    # -- elementwise functions ---------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)
        def back(g):
            self._accumulate(g * out_data)
        return Tensor._from_op(out_data, (self,), back)

    def log(self):
        def back(g):
            self._accumulate(g / self.data)
        return Tensor._from_op(np.log(self.data), (self,), back)

    def sqrt(self):
        out_data = np.sqrt(self.data)
        def back(g):
            self._accumulate(g * 0.5 / out_data)
        return Tensor._from_op(out_data, (self,), back)

    def tanh(self):
        out_data = np.tanh(self.data)
        def back(g):
            self._accumulate(g * (1.0 - out_data * out_data))
        return Tensor._from_op(out_data, (self,), back)

    def sigmoid(self):
        out_data = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        def back(g):
            self._accumulate(g * out_data * (1.0 - out_data))
        return Tensor._from_op(out_data, (self,), back)

    def sin(self):
        def back(g):
            self._accumulate(g * np.cos(self.data))
        return Tensor._from_op(np.sin(self.data), (self,), back)

    def cos(self):
        def back(g):
            self._accumulate(-g * np.sin(self.data))
        return Tensor._from_op(np.cos(self.data), (self,), back)

    def abs(self):
        def back(g):
            self._accumulate(g * np.sign(self.data))
        return Tensor._from_op(np.abs(self.data), (self,), back)

    def relu(self):
        mask = self.data > 0
        def back(g):
            self._accumulate(g * mask)
        return Tensor._from_op(self.data * mask, (self,), back)

    def silu(self):
        return self * self.sigmoid()

    def softplus(self):
        # log(1 + e^x), stabilized for large |x|
        out_data = np.logaddexp(0.0, self.data)
        def back(g):
            self._accumulate(g * 0.5 * (1.0 + np.tanh(0.5 * self.data)))
        return Tensor._from_op(out_data, (self,), back)

    def clip(self, lo: float, hi: float):
        mask = (self.data >= lo) & (self.data <= hi)
        def back(g):
            self._accumulate(g * mask)
        return Tensor._from_op(np.clip(self.data, lo, hi), (self,), back)

    # -- reductions ----------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def back(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape))
                return
            gg = g if keepdims else np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(gg, self.data.shape))
        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims),
                               (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.data.shape[a] for a in axis]))
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        def back(g):
            self._accumulate(g.reshape(old))
        return Tensor._from_op(self.data.reshape(shape), (self,), back)

    def transpose(self, *axes):
        if not axes:
            axes = tuple(range(self.data.ndim))[::-1]
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        def back(g):
            self._accumulate(g.transpose(inv))
        return Tensor._from_op(self.data.transpose(axes), (self,), back)

    def __getitem__(self, idx):
        def back(g):
            buf = np.zeros_like(self.data)
            np.add.at(buf, idx, g)
            self._accumulate(buf)
        return Tensor._from_op(self.data[idx], (self,), back)

    # -- composites -------------------------------------------------------------------

    def softmax(self, axis: int = -1):
        shifted = self - Tensor(self.data.max(axis=axis, keepdims=True))
        e = shifted.exp()
        return e / e.sum(axis=axis, keepdims=True)

    def log_softmax(self, axis: int = -1):
        shifted = self - Tensor(self.data.max(axis=axis, keepdims=True))
        return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


class Parameter(Tensor):
    """A leaf tensor that always participates in gradient accumulation."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def backward(loss: Tensor) -> None:
    """Functional alias for ``loss.backward()``."""
    loss.backward()


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])
    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis),
                           tensors, back)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    def back(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))
    return Tensor._from_op(np.stack([t.data for t in tensors], axis=axis),
                           tensors, back)


def finite_diff_gradient(f: Callable[[Tensor], Tensor | float], x: Tensor,
                         h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, coordinate-wise.

    The estimate is independent of the tape and serves as the oracle for
    gradient checking: every differentiable primitive must agree with it.
    """
    def evaluate(arr: np.ndarray) -> float:
        with no_grad():
            out = f(Tensor(arr))
        return out.item() if isinstance(out, Tensor) else float(out)

    base = np.array(x.data, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = evaluate(base)
        flat[i] = orig - h
        lo = evaluate(base)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad

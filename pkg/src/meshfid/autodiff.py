"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Only the primitives the fidelity model and its losses need: matmul (with
batched leading axes), elementwise arithmetic with numpy broadcasting,
relu/sigmoid/abs/pow, softmax over the last axis, reshape/transpose/concat,
sum/mean reductions, max over an axis with first-index argmax backward, and
integer-array row gathering.  Everything runs in float64, single-threaded,
and is bit-deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "concat",
    "scaled_dot_attention",
    "adamw_step",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum away prepended axes
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum axes that were broadcast from size 1
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph; wraps a float64 numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False, _parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._backward = None
        self._done = False

    # ---- construction helpers -------------------------------------------

    @staticmethod
    def as_tensor(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- graph machinery -------------------------------------------------

    def _make(self, data, parents, backward) -> "Tensor":
        out = Tensor(data, _parents=parents)
        if out.requires_grad:
            out._backward = backward
        return out

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output.

        Each graph may be traversed once; re-running without rebuilding the
        forward graph is an error.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if self._done:
            raise RuntimeError("backward() already ran on this graph; re-run forward first")
        if not self.requires_grad:
            raise RuntimeError("output is detached from any differentiable input")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
            node._done = True

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g, other.data.shape)

        return self._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            if self.requires_grad:
                self.grad += -g

        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-Tensor.as_tensor(other))

    def __rsub__(self, other):
        return Tensor.as_tensor(other) + (-self)

    def __mul__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g * other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g * self.data, other.data.shape)

        return self._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g / other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(-g * self.data / other.data**2, other.data.shape)

        return self._make(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return Tensor.as_tensor(other) / self

    def __pow__(self, exponent: float):
        out_data = self.data**exponent

        def backward(g):
            if self.requires_grad:
                self.grad += g * exponent * self.data ** (exponent - 1)

        return self._make(out_data, (self,), backward)

    def __matmul__(self, other):
        other = Tensor.as_tensor(other)
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.data.shape)

        return self._make(out_data, (self, other), backward)

    # ---- nonlinearities --------------------------------------------------

    def relu(self):
        mask = self.data > 0

        def backward(g):
            if self.requires_grad:
                self.grad += g * mask

        return self._make(self.data * mask, (self,), backward)

    def sigmoid(self):
        out_data = np.empty_like(self.data)
        pos = self.data >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-self.data[pos]))
        e = np.exp(self.data[~pos])
        out_data[~pos] = e / (1.0 + e)

        def backward(g):
            if self.requires_grad:
                self.grad += g * out_data * (1.0 - out_data)

        return self._make(out_data, (self,), backward)

    def abs(self):
        sign = np.sign(self.data)

        def backward(g):
            if self.requires_grad:
                self.grad += g * sign

        return self._make(np.abs(self.data), (self,), backward)

    def softmax(self):
        """Softmax over the last axis (numerically stable)."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            if self.requires_grad:
                dot = (g * out_data).sum(axis=-1, keepdims=True)
                self.grad += out_data * (g - dot)

        return self._make(out_data, (self,), backward)

    # ---- shape ops -------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape

        def backward(g):
            if self.requires_grad:
                self.grad += g.reshape(orig)

        return self._make(self.data.reshape(shape), (self,), backward)

    def transpose(self, axes=None):
        axes = tuple(axes) if axes is not None else tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)

        def backward(g):
            if self.requires_grad:
                self.grad += g.transpose(inv)

        return self._make(self.data.transpose(axes), (self,), backward)

    @property
    def T(self):
        return self.transpose()

    def gather_rows(self, index: np.ndarray):
        """Index the first axis by an integer array; backward scatter-adds."""
        index = np.asarray(index)

        def backward(g):
            if self.requires_grad:
                np.add.at(self.grad, index, g)

        return self._make(self.data[index], (self,), backward)

    # ---- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(g):
            if self.requires_grad:
                if axis is None:
                    self.grad += np.broadcast_to(g, shape)
                else:
                    gg = g if keepdims else np.expand_dims(g, axis)
                    self.grad += np.broadcast_to(gg, shape)

        return self._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis: int):
        """Max over `axis`; gradient flows only to the first argmax per slot."""
        idx = np.argmax(self.data, axis=axis)
        out_data = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

        def backward(g):
            if self.requires_grad:
                gg = np.zeros_like(self.data)
                np.put_along_axis(gg, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
                self.grad += gg

        return self._make(out_data, (self,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [Tensor.as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.grad += g[tuple(sl)]

    out = Tensor(out_data, _parents=tuple(tensors))
    if out.requires_grad:
        out._backward = backward
    return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q kᵀ / sqrt(d)) v over the trailing two axes.

    Accepts (..., n_q, d), (..., n_k, d), (..., n_k, d_v) with matching
    leading axes.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key width mismatch: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value length mismatch: {k.shape} vs {v.shape}")
    d = q.shape[-1]
    logits = (q @ k.transpose(tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2))) * (1.0 / np.sqrt(d))
    return logits.softmax() @ v


# ---- parameters and the optimizer ---------------------------------------


@dataclass
class Parameter:
    """A named trainable tensor with AdamW moment buffers."""

    tensor: Tensor
    name: str
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.tensor.requires_grad = True
        if self.m is None:
            self.m = np.zeros_like(self.tensor.data)
        if self.v is None:
            self.v = np.zeros_like(self.tensor.data)
        if self.m.shape != self.tensor.data.shape or self.v.shape != self.tensor.data.shape:
            raise ValueError(f"moment buffers must match parameter shape for {self.name}")


def adamw_step(
    params,
    lr: float,
    wd: float = 0.0,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
    step: int = 1,
) -> None:
    """One AdamW update in place; decoupled weight decay, bias-corrected moments."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if lr < 0:
        raise ValueError("lr must be nonnegative")
    b1, b2 = betas
    for p in params:
        g = p.tensor.grad
        if g is None:
            continue
        if g.shape != p.tensor.data.shape:
            raise ValueError(f"gradient shape mismatch for {p.name}")
        # decoupled decay, independent of the moment update
        p.tensor.data *= 1.0 - lr * wd
        p.m = b1 * p.m + (1 - b1) * g
        p.v = b2 * p.v + (1 - b2) * g * g
        m_hat = p.m / (1 - b1**step)
        v_hat = p.v / (1 - b2**step)
        p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

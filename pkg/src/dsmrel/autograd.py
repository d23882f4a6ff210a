"""A small reverse-mode autodiff over 2-D float64 numpy arrays.

Only the operations the relational GCN needs are provided. Gradients
accumulate into ``Tensor.grad`` after ``backward()`` on a 1x1 result.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ShapeMismatch


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(-1, 1)
        elif data.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {data.shape}")
        self.data = data
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def _acc(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatch("backward() needs a scalar output")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise -------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        try:
            out = np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeMismatch(f"cannot add {self.shape} and {other.shape}") from None
        del out

        def back(g):
            self._acc(_unbroadcast(g, self.shape))
            other._acc(_unbroadcast(g, other.shape))

        return Tensor(self.data + other.data, (self, other), back)

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: self._acc(-g))

    def __sub__(self, other):
        return self + (-(other if isinstance(other, Tensor) else Tensor(other)))

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeMismatch(f"cannot multiply {self.shape} and {other.shape}") from None

        def back(g):
            self._acc(_unbroadcast(g * other.data, self.shape))
            other._acc(_unbroadcast(g * self.data, other.shape))

        return Tensor(self.data * other.data, (self, other), back)

    def relu(self):
        mask = self.data > 0
        return Tensor(np.where(mask, self.data, 0.0), (self,), lambda g: self._acc(g * mask))

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor(t, (self,), lambda g: self._acc(g * (1.0 - t * t)))

    def exp(self):
        e = np.exp(self.data)
        return Tensor(e, (self,), lambda g: self._acc(g * e))

    # -- linear algebra ----------------------------------------------------

    def __matmul__(self, other):
        if self.shape[1] != other.shape[0]:
            raise ShapeMismatch(f"cannot matmul {self.shape} @ {other.shape}")

        def back(g):
            self._acc(g @ other.data.T)
            other._acc(self.data.T @ g)

        return Tensor(self.data @ other.data, (self, other), back)

    @property
    def T(self):
        return Tensor(self.data.T.copy(), (self,), lambda g: self._acc(g.T))

    def sum(self):
        return Tensor(self.data.sum(), (self,), lambda g: self._acc(np.full(self.shape, g.item())))

    def mean(self):
        n = self.data.size
        return Tensor(self.data.sum() / n, (self,), lambda g: self._acc(np.full(self.shape, g.item() / n)))

    def rows(self, idx):
        """Gather rows ``idx`` (repeats allowed)."""
        idx = np.asarray(idx, dtype=np.int64)

        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._acc(full)

        return Tensor(self.data[idx], (self,), back)

    def pick(self, cols):
        """Row-wise gather: out[i] = self[i, cols[i]], shape (n, 1)."""
        cols = np.asarray(cols, dtype=np.int64)
        ar = np.arange(len(cols))

        def back(g):
            full = np.zeros_like(self.data)
            full[ar, cols] = g[:, 0]
            self._acc(full)

        return Tensor(self.data[ar, cols].reshape(-1, 1), (self,), back)

    def log_softmax(self):
        z = self.data - self.data.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
        out = z - lse
        p = np.exp(out)

        def back(g):
            self._acc(g - p * g.sum(axis=1, keepdims=True))

        return Tensor(out, (self,), back)


def spmm(A: sp.csr_matrix, X: Tensor) -> Tensor:
    """Constant sparse matrix times tensor."""
    if A.shape[1] != X.shape[0]:
        raise ShapeMismatch(f"cannot multiply sparse {A.shape} @ {X.shape}")
    At = A.T.tocsr()
    return Tensor(A @ X.data, (X,), lambda g: X._acc(At @ g))


def param(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)

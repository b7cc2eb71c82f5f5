"""Reverse-mode autodiff over numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient of the same shape.
Operations build a graph of closures; ``backward()`` on a scalar loss
walks it in reverse topological order. Everything runs on the CPU in the
dtype of the inputs (float32 for model weights, float64 for gradient
checks); large forward reductions accumulate in 64-bit.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate gradients of every reachable tensor that requires them."""
        if self.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    # arithmetic sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, ops.as_tensor(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, ops.as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, ops.as_tensor(other, self.dtype))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(ops.as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, ops.as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(ops.as_tensor(other, self.dtype), self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops

        return ops.index(self, key)

    def reshape(self, *shape):
        from . import ops

        return ops.reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        from . import ops

        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops

        return ops.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)


def make_node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Graph node; gradients only tracked if some parent wants them."""
    requires = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=requires,
        _parents=parents if requires else (),
        _backward=backward if requires else None,
    )

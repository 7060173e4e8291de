"""A small reverse-mode automatic differentiation engine over float64 arrays.

Tensors wrap numpy arrays and record the operations that produced them;
``backward()`` on a scalar accumulates exact gradients into every upstream
tensor created with ``requires_grad=True``. Broadcasting follows numpy rules,
with gradients summed back over the broadcast axes. All math runs in float64
and is bitwise deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph walking ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            else:
                node.grad = g if node.grad is None else node.grad + g

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = Tensor(
            self.data + other.data,
            _parents=(self, other),
            _backward=lambda g: (
                (self, _unbroadcast(g, self.data.shape)),
                (other, _unbroadcast(g, other.data.shape)),
            ),
        )
        return out

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: ((self, -g),))

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = Tensor(
            self.data * other.data,
            _parents=(self, other),
            _backward=lambda g: (
                (self, _unbroadcast(g * other.data, self.data.shape)),
                (other, _unbroadcast(g * self.data, other.data.shape)),
            ),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = Tensor(
            self.data / other.data,
            _parents=(self, other),
            _backward=lambda g: (
                (self, _unbroadcast(g / other.data, self.data.shape)),
                (other, _unbroadcast(-g * self.data / other.data**2, other.data.shape)),
            ),
        )
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        out = Tensor(
            self.data**exponent,
            _parents=(self,),
            _backward=lambda g: ((self, g * exponent * self.data ** (exponent - 1)),),
        )
        return out

    def __matmul__(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data

        # batched-by-2D products collapse to one large GEMM; the generic
        # np.matmul path would issue one tiny BLAS call per batch row
        if a.ndim == 3 and b.ndim == 2:
            B, n, k = a.shape
            m = b.shape[1]
            out_data = (a.reshape(B * n, k) @ b).reshape(B, n, m)

            def backward(g):
                g2 = g.reshape(B * n, m)
                ga = (g2 @ b.T).reshape(B, n, k)
                gb = a.reshape(B * n, k).T @ g2
                return ((self, ga), (other, gb))

            return Tensor(out_data, _parents=(self, other), _backward=backward)

        if a.ndim == 2 and b.ndim == 3:
            m, n = a.shape
            B, _, H = b.shape
            bt = b.transpose(1, 0, 2).reshape(n, B * H)
            out_data = (a @ bt).reshape(m, B, H).transpose(1, 0, 2)

            def backward(g):
                gt = g.transpose(1, 0, 2).reshape(m, B * H)
                ga = gt @ bt.T
                gb = (a.T @ gt).reshape(n, B, H).transpose(1, 0, 2)
                return ((self, ga), (other, gb))

            return Tensor(out_data, _parents=(self, other), _backward=backward)

        def backward(g):
            if a.ndim == 1 and b.ndim == 1:
                ga, gb = g * b, g * a
            elif b.ndim == 1:
                ga = np.expand_dims(g, -1) * b
                gb = np.einsum("...nm,...n->...m", a, g)
            elif a.ndim == 1:
                ga = np.einsum("...k,...nk->...n", g, b)
                gb = np.einsum("n,...k->...nk", a, g)
            else:
                ga = g @ np.swapaxes(b, -1, -2)
                gb = np.swapaxes(a, -1, -2) @ g
            return (
                (self, _unbroadcast(ga, a.shape)),
                (other, _unbroadcast(gb, b.shape)),
            )

        return Tensor(a @ b, _parents=(self, other), _backward=backward)

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        value = np.exp(self.data)
        return Tensor(value, _parents=(self,), _backward=lambda g: ((self, g * value),))

    def log(self):
        return Tensor(
            np.log(self.data), _parents=(self,), _backward=lambda g: ((self, g / self.data),)
        )

    def sqrt(self):
        value = np.sqrt(self.data)
        return Tensor(
            value, _parents=(self,), _backward=lambda g: ((self, g / (2.0 * value)),)
        )

    def tanh(self):
        value = np.tanh(self.data)
        return Tensor(
            value, _parents=(self,), _backward=lambda g: ((self, g * (1.0 - value**2)),)
        )

    def sigmoid(self):
        value = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor(
            value,
            _parents=(self,),
            _backward=lambda g: ((self, g * value * (1.0 - value)),),
        )

    # -- reductions and shape ------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                return ((self, np.broadcast_to(g, self.data.shape).copy()),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return ((self, np.broadcast_to(g, self.data.shape).copy()),)

        return Tensor(out_data, _parents=(self,), _backward=backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def max(self, axis=None, keepdims=False):
        out_data = self.data.max(axis=axis, keepdims=keepdims)

        def backward(g):
            expanded = out_data if keepdims or axis is None else np.expand_dims(out_data, axis)
            mask = self.data == expanded
            counts = mask.sum(axis=axis, keepdims=True)
            gex = g if keepdims or axis is None else np.expand_dims(g, axis)
            return ((self, mask * (gex / counts)),)

        return Tensor(out_data, _parents=(self,), _backward=backward)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor(
            self.data.reshape(shape),
            _parents=(self,),
            _backward=lambda g: ((self, g.reshape(old)),),
        )

    def take(self, indices, axis=0):
        """Select rows along an axis; gradients scatter-add back."""
        indices = np.asarray(indices)
        out_data = np.take(self.data, indices, axis=axis)

        def backward(g):
            full = np.zeros_like(self.data)
            if axis == 0:
                np.add.at(full, indices, g)
            else:
                moved = np.moveaxis(full, axis, 0)
                np.add.at(moved, indices, np.moveaxis(g, axis, 0))
            return ((self, full),)

        return Tensor(out_data, _parents=(self,), _backward=backward)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def masked_softmax(logits: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to entries where ``mask`` is 1.

    Masked-out entries get probability exactly 0 and contribute no gradient.
    Every slice along ``axis`` must contain at least one valid entry. The
    max-shift is detached, which leaves gradients unchanged (softmax is shift
    invariant); masked entries are pinned to the shift value before the exp so
    padding garbage can never overflow.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if not (mask.sum(axis=axis) > 0).all():
        raise ValueError("masked_softmax requires at least one valid entry per slice")
    shift_data = np.where(mask > 0, logits.data, -np.inf).max(axis=axis, keepdims=True)
    pinned = logits * mask + Tensor((1.0 - mask) * shift_data)
    e = (pinned - Tensor(shift_data)).exp() * mask
    return e / e.sum(axis=axis, keepdims=True)


def cosine_similarity(a: Tensor, b: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Cosine of the angle between two embeddings along ``axis``."""
    dot = (a * b).sum(axis=axis)
    na = (a * a).sum(axis=axis).sqrt()
    nb = (b * b).sum(axis=axis).sqrt()
    return dot / (na * nb + eps)

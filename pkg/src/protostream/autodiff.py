"""Reverse-mode automatic differentiation over dense float64 arrays.

Small tape-based engine: enough primitives to train the embedding
network and differentiate the prototype/contrastive losses, nothing
more. Every op output is checked for NaN/Inf and fails fast.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class ContractViolation(ValueError):
    """A documented precondition of an operation was violated."""


class NumericOverflowError(ArithmeticError):
    """An operation produced a non-finite (NaN/Inf) value."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (pure forward evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    Tensors created by operations remember their parents and a backward
    closure; calling ``backward()`` on a scalar accumulates ``grad`` on
    every reachable tensor with ``requires_grad=True``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph --------------------------------------------------------------

    def backward(self):
        """Backpropagate from a scalar, accumulating into ``.grad`` buffers."""
        if self.data.size != 1:
            raise ContractViolation("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward_fn(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g)
                else:
                    parent.grad = parent.grad + g

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    """Wrap a value as a constant Tensor (no-op on Tensors)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _make(data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericOverflowError(f"non-finite value produced by op '{op}'")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out axes that numpy broadcasting added or stretched."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- primitives --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, "mul", (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractViolation("matmul supports 2-D operands only")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, "matmul", (a, b), backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g.T,)

    return _make(a.data.T, "transpose", (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), "reshape", (a,), backward)


def relu(a) -> Tensor:
    """Elementwise max(x, 0); also serves as max-with-constant via shifts."""
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _make(np.maximum(a.data, 0.0), "relu", (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return _make(out_data, "tanh", (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), "sum", (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), "mean", (a,), backward)


def squared_norm(a, axis=None, keepdims: bool = False) -> Tensor:
    """Sum of squared entries, optionally along one axis."""
    a = as_tensor(a)
    return tsum(mul(a, a), axis=axis, keepdims=keepdims)


def pairwise_sqdist(a: Tensor, b: Tensor) -> Tensor:
    """Squared Euclidean distances between rows of a (n,d) and b (m,d).

    Uses the inner-product expansion, so tiny negative values can appear
    for near-identical rows; downstream consumers (softmax logits, margin
    hinge) tolerate that.
    """
    a, b = as_tensor(a), as_tensor(b)
    sq_a = squared_norm(a, axis=1, keepdims=True)   # (n, 1)
    sq_b = squared_norm(b, axis=1, keepdims=True)   # (m, 1)
    cross = matmul(a, transpose(b))                 # (n, m)
    return add(sub(sq_a, mul(cross, 2.0)), transpose(sq_b))


def conv1d(x, w, b) -> Tensor:
    """Valid 1-D convolution over the time axis.

    x: (n, channels, timesteps), w: (filters, channels, kernel), b: (filters,).
    Output: (n, filters, timesteps - kernel + 1).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 3 or w.ndim != 3:
        raise ContractViolation("conv1d expects x (n,C,T) and w (F,C,K)")
    kernel = w.shape[2]
    if x.shape[1] != w.shape[1] or x.shape[2] < kernel:
        raise ContractViolation(
            f"conv1d shape mismatch: x {x.shape} vs w {w.shape}"
        )
    cols = np.lib.stride_tricks.sliding_window_view(x.data, kernel, axis=2)
    out = np.einsum("ncok,fck->nfo", cols, w.data) + b.data[None, :, None]
    out_len = out.shape[2]

    def backward(g):
        gw = np.einsum("nfo,ncok->fck", g, cols)
        gb = g.sum(axis=(0, 2))
        gx = np.zeros_like(x.data)
        for k in range(kernel):
            gx[:, :, k:k + out_len] += np.einsum("nfo,fc->nco", g, w.data[:, :, k])
        return gx, gw, gb

    return _make(out, "conv1d", (x, w, b), backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits).

    Fused and numerically stable; gradient is (softmax - onehot) / n.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ContractViolation("labels must be a vector matching the batch size")
    if labels.min() < 0 or labels.max() >= k:
        raise ContractViolation("label index out of range of the logit columns")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    log_z = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    nll = log_z[:, 0] - z[np.arange(n), labels]
    probs = np.exp(z - log_z)

    def backward(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return (g * grad / n,)

    return _make(nll.mean(), "softmax_cross_entropy", (logits,), backward)


# -- driver ------------------------------------------------------------------


def forward_backward(params: Sequence[Tensor], loss_fn: Callable[[], Tensor]) -> float:
    """Evaluate a scalar loss and populate ``grad`` on every parameter."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    if loss.data.size != 1:
        raise ContractViolation("loss_fn must produce a scalar")
    loss.backward()
    for p in params:
        if p.grad is None:
            # parameter unused by the loss: gradient is exactly zero
            p.grad = np.zeros_like(p.data)
    return float(loss.data)


# -- optimizers ---------------------------------------------------------------


class GradientDescent:
    """Plain first-order descent. Kept for unit tests and hand traces."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float):
        if learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self):
        """Apply one update from populated gradients, then clear them."""
        for p in self.params:
            if p.grad is None:
                raise ContractViolation("optimizer step with missing gradient")
        for p in self.params:
            p.data -= self.learning_rate * p.grad
            p.grad = None
        self.step_count += 1


class Adam:
    """Adaptive-moment estimation with bias correction.

    Standard decay constants (0.9, 0.999, eps 1e-8); per-parameter first
    and second moment buffers plus a shared step counter.
    """

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractViolation("optimizer step with missing gradient")
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / (1.0 - self.beta1 ** t)
            v_hat = self._v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None


def make_optimizer(params: Sequence[Tensor], learning_rate: float, kind: str = "adam"):
    if kind == "adam":
        return Adam(params, learning_rate)
    if kind == "sgd":
        return GradientDescent(params, learning_rate)
    raise ContractViolation(f"unknown optimizer kind '{kind}'")

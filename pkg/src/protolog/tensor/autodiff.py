"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op records its parents and a closure mapping the output gradient to
parent gradients.  :meth:`Tensor.backward` walks the graph once in
reverse topological order.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    pass


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    return data


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    # construction helpers
    @staticmethod
    def const(data) -> "Tensor":
        return data if isinstance(data, Tensor) else Tensor(data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor({self.data!r})"

    def __len__(self):
        return len(self.data)

    # operators
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return index(self, idx)

    def sum(self, axis=None): return tsum(self, axis)
    def mean(self, axis=None): return mean(self, axis)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(node) into ``node.grad`` for every ancestor."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topo(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node.backward_fn is None:
                continue
            pgrads = node.backward_fn(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg


def _topo(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first), each node exactly once."""
    seen = set()
    order = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _check(a.data + b.data, "add")
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _check(a.data - b.data, "sub")
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _check(a.data * b.data, "mul")
    return Tensor(out, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _check(a.data / b.data, "div")
    return Tensor(out, (a, b), lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
    ))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _check(np.exp(a.data), "exp")
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _check(np.log(a.data), "log")
    return Tensor(out, (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(_check(a.data * a.data, "square"), (a,), lambda g: (2.0 * g * a.data,))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; the gradient is zero where clipping is active."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(out, (a,), lambda g: (g * inside,))


# --- linear algebra and reductions ----------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _check(a.data @ b.data, "matmul")

    def bw(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 2:
            return g @ bd.T, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        return g @ bd.T, ad.T @ g

    return Tensor(out, (a, b), bw)


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(out, (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def index(a, idx) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    a = as_tensor(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(out, (a,), bw)


def take_rows(a, rows) -> Tensor:
    return index(a, (np.asarray(rows, dtype=np.intp),))


def gather(a, rows, cols) -> Tensor:
    return index(a, (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp)))


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return tensors[0]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, tuple(tensors), bw)


def stack(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors])
    return Tensor(out, tuple(tensors), lambda g: tuple(g[i] for i in range(len(tensors))))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def log_softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    out = x - lse
    sm = np.exp(out)
    return Tensor(out, (a,), lambda g: (g - sm * g.sum(axis=axis, keepdims=True),))


def softmax(a, axis=-1) -> Tensor:
    return exp(log_softmax(a, axis))


# --- losses ----------------------------------------------------------------


def mse(a, b, axis=None) -> Tensor:
    return mean(square(sub(a, b)), axis)


def bce(p, target, eps: float = 1e-7) -> Tensor:
    """Binary cross-entropy of probabilities ``p`` clamped to ``[eps, 1-eps]``."""
    p = clamp(as_tensor(p), eps, 1.0 - eps)
    t = as_tensor(target)
    return -(t * log(p) + (1.0 - t) * log(1.0 - p))


LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_log_density(z, mean_, log_std, axis=-1) -> Tensor:
    """Diagonal Gaussian log-density, summed over ``axis``."""
    z, mean_, log_std = as_tensor(z), as_tensor(mean_), as_tensor(log_std)
    inv_std = exp(-log_std)
    r = (z - mean_) * inv_std
    per = -0.5 * LOG_2PI - log_std - 0.5 * square(r)
    return tsum(per, axis)


def custom(data, parents, backward_fn) -> Tensor:
    """Wrap a hand-written op: ``backward_fn(g)`` returns parent gradients."""
    return Tensor(_check(np.asarray(data, dtype=np.float64), "custom"), tuple(parents), backward_fn)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)

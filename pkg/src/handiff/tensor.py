"""Reverse-accumulation gradients over numpy arrays.

A small dynamically-built tape sized for the fixed architectures in this
package: elementwise arithmetic, dense and convolutional linear maps,
pooling/upsampling, table lookups. Nodes whose inputs do not require
gradients are pruned at construction, so evaluation with frozen
parameters carries no graph overhead beyond the numpy work itself.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """One node in the computation graph.

    ``data`` is always a numpy array. ``grad`` is populated by
    :func:`backward` for every node reached from the loss.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    # Make numpy defer mixed ndarray-Tensor arithmetic to our reflected
    # operators instead of coercing the Tensor into an object array.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    # -- operator sugar -------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """Leaf tensor that accumulates gradients."""
    return Tensor(np.asarray(data), requires_grad=True)


def from_op(data: np.ndarray, parents, vjp) -> Tensor:
    """Build an op result node; prunes the tape when no parent needs grads.

    ``vjp(g)`` must return one gradient array (or None) per parent.
    """
    parents = tuple(as_tensor(p) for p in parents)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return from_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return from_op(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return from_op(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return from_op(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return from_op(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return from_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return from_op(a.data * s, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def stop_gradient(a) -> Tensor:
    """Value passes through; gradients do not."""
    a = as_tensor(a)
    return Tensor(a.data)


# -- reductions and shape ops ---------------------------------------------


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / out.size

    def vjp(g):
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g / count, a.data.shape).copy(),)

    return from_op(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))
    return from_op(
        np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inverse),)
    )


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[idx] = g
        return (out,)

    return from_op(a.data[idx], (a,), vjp)


def concat(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return from_op(np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def stack(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.moveaxis(g, axis, 0))

    return from_op(np.stack([p.data for p in parts], axis=axis), parts, vjp)


# -- linear maps -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """2-D matrix product; higher-rank operands must be reshaped first."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    return from_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def embedding(table, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return from_op(table.data[ids], (table,), vjp)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    b, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        (b, ho, wo, c, kh, kw),
        (s0, s2 * stride, s3 * stride, s1, s2, s3),
        writeable=False,
    )
    cols = np.ascontiguousarray(view).reshape(b * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv2d(x, w, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """NCHW cross-correlation via im2col and a BLAS matmul."""
    x, w = as_tensor(x), as_tensor(w)
    b, c, _, _ = x.data.shape
    co, ci, kh, kw = w.data.shape
    if ci != c:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {ci}")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    wmat = w.data.reshape(co, ci * kh * kw)
    y = cols @ wmat.T
    if bias is not None:
        y += as_tensor(bias).data
    y = np.ascontiguousarray(y.reshape(b, ho, wo, co).transpose(0, 3, 1, 2))

    def vjp(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b * ho * wo, co)
        gw = (g2.T @ cols).reshape(w.data.shape)
        gcols = (g2 @ wmat).reshape(b, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        hp, wp = x.data.shape[2] + 2 * pad, x.data.shape[3] + 2 * pad
        gx = np.zeros((b, c, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += gcols[
                    :, :, i, j
                ]
        if pad:
            gx = gx[:, :, pad:-pad, pad:-pad]
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, w) if bias is None else (x, w, bias)
    return from_op(y, parents, vjp)


def avg_pool2d(x) -> Tensor:
    """2x2 average pooling; spatial dims must be even."""
    x = as_tensor(x)
    b, c, h, w = x.data.shape
    y = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def vjp(g):
        g = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return (0.25 * g,)

    return from_op(y, (x,), vjp)


def upsample_nearest2(x) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    x = as_tensor(x)
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def vjp(g):
        b, c, h, w = g.shape
        return (g.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5)),)

    return from_op(y, (x,), vjp)


# -- graph traversal --------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        st = state.get(id(node))
        if st is None:
            state[id(node)] = 0
            for p in node._parents:
                if p.requires_grad and state.get(id(p)) is None:
                    stack.append(p)
        else:
            stack.pop()
            if st == 0:
                state[id(node)] = 1
                order.append(node)
    return order


def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Populate ``grad`` on every tensor the loss depends on."""
    if not root.requires_grad:
        raise ValueError("root does not require gradients")
    order = _topo_order(root)
    grads: dict[int, np.ndarray] = {
        id(root): np.ones_like(root.data) if seed is None else np.asarray(seed)
    }
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# -- optimization ------------------------------------------------------------


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return norm


class Adam:
    """Adaptive-moment gradient descent over a fixed parameter list."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p.data = p.data - np.asarray(self.lr, dtype=p.data.dtype) * (
                mhat / (np.sqrt(vhat) + self.eps)
            ).astype(p.data.dtype)

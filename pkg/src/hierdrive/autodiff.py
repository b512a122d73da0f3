"""Dense float64 tensors with reverse-mode automatic differentiation.

A forward pass records one dynamic tape: each produced Tensor keeps its
parents and a closure that pushes gradients to them. ``backward`` on a
scalar walks the tape in reverse topological order, visiting each node
exactly once. Everything is float64; integer indices stay plain numpy
arrays outside the tape.
"""

import numpy as np

from . import _kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Populate .grad of every reachable tensor that requires grad."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
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
            if node._backward is not None and node.grad is not None:
                node._backward()

    # operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, 1.0 / other) if isinstance(other, (int, float)) else _notimpl()

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _notimpl():
    raise TypeError("unsupported tensor operation")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
        t.grad = g if t.grad is None else t.grad + g
    elif t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _accum_owned(t, g):
    """Accumulate a freshly-allocated, shape-exact gradient (no copy)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data + b.data, (a, b), None)

    def backward():
        _accum(a, out.grad)
        _accum(b, out.grad)

    out._backward = backward
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data - b.data, (a, b), None)

    def backward():
        _accum(a, out.grad)
        _accum(b, -out.grad)

    out._backward = backward
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data * b.data, (a, b), None)

    def backward():
        _accum(a, out.grad * b.data)
        _accum(b, out.grad * a.data)

    out._backward = backward
    return out


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = _make(np.where(mask, x.data, 0.0), (x,), None)

    def backward():
        _accum(x, out.grad * mask)

    out._backward = backward
    return out


def absolute(x):
    x = as_tensor(x)
    s = np.sign(x.data)
    out = _make(np.abs(x.data), (x,), None)

    def backward():
        _accum(x, out.grad * s)

    out._backward = backward
    return out


def maximum(a, b):
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data >= b.data
    out = _make(np.where(mask, a.data, b.data), (a, b), None)

    def backward():
        _accum(a, out.grad * mask)
        _accum(b, out.grad * ~mask)

    out._backward = backward
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = _make(y, (x,), None)

    def backward():
        _accum(x, out.grad * y * (1.0 - y))

    out._backward = backward
    return out


def sqrt(x):
    x = as_tensor(x)
    y = np.sqrt(x.data)
    out = _make(y, (x,), None)

    def backward():
        _accum(x, out.grad * 0.5 / y)

    out._backward = backward
    return out


def gelu(x):
    x = as_tensor(x)
    out = _make(_kernels.gelu_forward(x.data), (x,), None)

    def backward():
        _accum(x, _kernels.gelu_backward(x.data, out.grad))

    out._backward = backward
    return out


def atan2(y, x):
    y, x = as_tensor(y), as_tensor(x)
    out = _make(np.arctan2(y.data, x.data), (y, x), None)

    def backward():
        r2 = y.data * y.data + x.data * x.data
        _accum(y, out.grad * x.data / r2)
        _accum(x, -out.grad * y.data / r2)

    out._backward = backward
    return out


# shape ops -------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _make(a.data @ b.data, (a, b), None)

    def backward():
        if a.requires_grad:
            _accum_owned(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accum_owned(b, a.data.T @ out.grad)

    out._backward = backward
    return out


def affine(x, w, b):
    """Fused x @ w + b (b broadcast over rows)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out = _make(x.data @ w.data + b.data, (x, w, b), None)

    def backward():
        g = out.grad
        if x.requires_grad:
            _accum_owned(x, g @ w.data.T)
        if w.requires_grad:
            _accum_owned(w, x.data.T @ g)
        if b.requires_grad:
            _accum_owned(b, g.sum(axis=0) if g.ndim > b.data.ndim else g.copy())

    out._backward = backward
    return out


def transpose(x, axes=None):
    x = as_tensor(x)
    out = _make(np.transpose(x.data, axes), (x,), None)
    inv = None if axes is None else np.argsort(axes)

    def backward():
        _accum(x, np.transpose(out.grad, inv))

    out._backward = backward
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = _make(x.data.reshape(shape), (x,), None)

    def backward():
        _accum(x, out.grad.reshape(x.data.shape))

    out._backward = backward
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), None)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward():
        for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
            _accum(t, g)

    out._backward = backward
    return out


def _idx_may_repeat(idx):
    """True when indexing may visit an element twice (needs np.add.at)."""
    if isinstance(idx, tuple):
        return any(_idx_may_repeat(i) for i in idx)
    return isinstance(idx, (list, np.ndarray))


def take(x, idx):
    """Indexing/gather; integer-array indices give embedding-style lookup."""
    x = as_tensor(x)
    out = _make(x.data[idx], (x,), None)
    scatter = _idx_may_repeat(idx)

    def backward():
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            if scatter:
                np.add.at(x.grad, idx, out.grad)
            else:
                x.grad[idx] += out.grad

    out._backward = backward
    return out


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), None)

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape))

    out._backward = backward
    return out


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.data.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / float(n))


def cumsum(x, axis):
    x = as_tensor(x)
    out = _make(np.cumsum(x.data, axis=axis), (x,), None)

    def backward():
        g = np.flip(np.cumsum(np.flip(out.grad, axis), axis=axis), axis)
        _accum(x, g)

    out._backward = backward
    return out


# normalization / attention ----------------------------------------------------

def softmax(x, axis=-1):
    x = as_tensor(x)
    if axis >= x.data.ndim or axis < -x.data.ndim:
        raise ValueError(f"softmax axis {axis} out of range for shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (x,), None)

    def backward():
        g = out.grad
        _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    out._backward = backward
    return out


def layer_norm(x, eps=1e-6):
    """Row-wise layer normalization of a 2D tensor, no affine terms."""
    x = as_tensor(x)
    y, rstd = _kernels.layer_norm_forward(np.ascontiguousarray(x.data), eps)
    out = _make(y, (x,), None)

    def backward():
        _accum_owned(x, _kernels.layer_norm_backward(y, rstd, np.ascontiguousarray(out.grad)))

    out._backward = backward
    return out


def layer_norm_affine(x, gamma, beta, eps=1e-6):
    """Fused layer_norm(x) * gamma + beta."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    y, rstd = _kernels.layer_norm_forward(np.ascontiguousarray(x.data), eps)
    out = _make(y * gamma.data + beta.data, (x, gamma, beta), None)

    def backward():
        g = out.grad
        _accum_owned(gamma, (g * y).sum(axis=0))
        _accum_owned(beta, g.sum(axis=0))
        if x.requires_grad:
            dy = np.ascontiguousarray(g * gamma.data)
            _accum_owned(x, _kernels.layer_norm_backward(y, rstd, dy))

    out._backward = backward
    return out


def _last_dim_contiguous(a):
    return a.strides[-1] == a.itemsize


def scaled_dot_attention(q, k, v, scale):
    """Fused attention over head batches: q (H,Nq,dh), k/v (H,Nk,dh)."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    qd = q.data if _last_dim_contiguous(q.data) else np.ascontiguousarray(q.data)
    kd = k.data if _last_dim_contiguous(k.data) else np.ascontiguousarray(k.data)
    vd = v.data if _last_dim_contiguous(v.data) else np.ascontiguousarray(v.data)
    o, attn = _kernels.sdpa_forward(qd, kd, vd, scale)
    out = _make(o, (q, k, v), None)

    def backward():
        g = out.grad if _last_dim_contiguous(out.grad) else np.ascontiguousarray(out.grad)
        dq, dk, dv = _kernels.sdpa_backward(qd, kd, vd, attn, scale, g)
        _accum_owned(q, dq)
        _accum_owned(k, dk)
        _accum_owned(v, dv)

    out._backward = backward
    return out


# losses ------------------------------------------------------------------------

def smooth_l1(pred, target, beta=1.0):
    """Elementwise smooth-L1 (Huber) of pred - target."""
    pred, target = as_tensor(pred), as_tensor(target)
    d = pred.data - target.data
    small = np.abs(d) < beta
    vals = np.where(small, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    out = _make(vals, (pred, target), None)

    def backward():
        g = out.grad * np.where(small, d / beta, np.sign(d))
        _accum(pred, g)
        _accum(target, -g)

    out._backward = backward
    return out


def cross_entropy(logits, labels):
    """Mean negative log-softmax at integer labels; logits (C,) or (N, C)."""
    logits = as_tensor(logits)
    x = logits.data
    squeeze = x.ndim == 1
    x2 = x[None, :] if squeeze else x
    lab = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    n, c = x2.shape
    if np.any(lab < 0) or np.any(lab >= c):
        raise ValueError("cross_entropy label out of range")
    z = x2 - x2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(n), lab]
    out = _make(nll.mean(), (logits,), None)

    def backward():
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), lab] -= 1.0
        g = out.grad * p / n
        _accum(logits, g[0] if squeeze else g)

    out._backward = backward
    return out


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy on raw logits (numerically stable)."""
    logits = as_tensor(logits)
    z = logits.data
    y = np.asarray(targets, dtype=np.float64)
    vals = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = _make(vals.mean(), (logits,), None)

    def backward():
        s = 1.0 / (1.0 + np.exp(-z))
        _accum(logits, out.grad * (s - y) / z.size)

    out._backward = backward
    return out

"""Small neural-net layer zoo on top of the autodiff tensors."""

import numpy as np

from .autodiff import (
    Tensor,
    affine,
    gelu,
    layer_norm_affine,
    reshape,
    scaled_dot_attention,
    transpose,
)


def parameter(values, requires_grad=True):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


def normal_param(rng, shape, std):
    return parameter(rng.normal(0.0, std, size=shape))


class Module:
    """Minimal container: parameters are Tensor attributes (recursively)."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{key}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{key}.{i}", item

    def parameters(self):
        return [t for _, t in self.named_parameters()]


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, zero=False):
        if zero or rng is None:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))
        self.w = parameter(w)
        self.b = parameter(np.zeros(n_out))

    def __call__(self, x):
        return affine(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))

    def __call__(self, x):
        return layer_norm_affine(x, self.gamma, self.beta)


class MLP(Module):
    """Linear stack with GELU between layers (none after the last)."""

    def __init__(self, sizes, rng=None, zero=False):
        self.layers = [Linear(a, b, rng, zero=zero) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = gelu(x)
        return x


class MultiHeadAttention(Module):
    """Multi-head attention over 2D token matrices (N, dim).

    With project_kv=False the given keys/values are consumed directly
    (split into heads without their own projections); used where an
    upstream adapter already produced the attention memory.
    """

    def __init__(self, dim, heads, rng=None, project_kv=True):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.dim = dim
        self.wq = Linear(dim, dim, rng)
        if project_kv:
            self.wk = Linear(dim, dim, rng)
            self.wv = Linear(dim, dim, rng)
        else:
            self.wk = self.wv = None
        self.wo = Linear(dim, dim, rng)

    def _heads(self, x):
        return transpose(reshape(x, (x.shape[0], self.heads, self.dim // self.heads)), (1, 0, 2))

    def __call__(self, q, k, v):
        if q.shape[-1] != self.dim or k.shape[-1] != self.dim or v.shape[-1] != self.dim:
            raise ValueError("attention input width does not match layer dim")
        if k.shape[0] != v.shape[0]:
            raise ValueError("key/value token counts differ")
        dh = self.dim // self.heads
        qh = self._heads(self.wq(q))
        kh = self._heads(self.wk(k) if self.wk is not None else k)
        vh = self._heads(self.wv(v) if self.wv is not None else v)
        o = scaled_dot_attention(qh, kh, vh, 1.0 / np.sqrt(dh))
        o = reshape(transpose(o, (1, 0, 2)), (q.shape[0], self.dim))
        return self.wo(o)


class TransformerBlock(Module):
    """Pre-norm attention + feed-forward block.

    Self-attention by default; pass keys/values for cross-attention (they are
    consumed as given, without the query-side pre-norm).
    """

    def __init__(self, dim, heads, rng, ffn_mult=2, project_kv=True):
        self.ln_attn = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng, project_kv=project_kv)
        self.ln_ffn = LayerNorm(dim)
        self.ffn = MLP([dim, ffn_mult * dim, dim], rng)

    def __call__(self, x, keys=None, values=None):
        h = self.ln_attn(x)
        if keys is None:
            a = self.attn(h, h, h)
        else:
            a = self.attn(h, keys, values)
        x = x + a
        return x + self.ffn(self.ln_ffn(x))


def zero_module(module):
    """Zero every parameter in place (used for head ablations)."""
    for p in module.parameters():
        p.data[...] = 0.0
    return module

"""Layers built on the tensor engine: linear, layer norm, attention, pre-norm blocks."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T
from .tensor import Tensor


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container whose parameters are discovered by attribute order."""

    def named_parameters(self, prefix=""):
        out = []
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((name, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{name}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{name}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ShapeMismatch(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeMismatch(f"{k}: {v.shape} vs {p.shape}")
            p.data = v.copy()

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = parameter(uniform_init(rng, d_in, (d_in, d_out)))
        self.bias = parameter(uniform_init(rng, d_in, (d_out,))) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class MLP(Module):
    """Linear, GELU, linear."""

    def __init__(self, d_in, d_hidden, d_out, rng):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def __call__(self, x):
        return self.fc2(T.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ShapeMismatch(f"hidden dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.o = Linear(dim, dim, rng)

    def _split(self, x):
        b, n, d = x.shape
        return T.transpose(T.reshape(x, (b, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x, memory=None):
        """Attention of ``x`` (B, Nq, D) over ``memory`` (B, Nk, D), or over itself."""
        if x.ndim != 3:
            raise ShapeMismatch(f"attention input must be (B, N, D), got {x.shape}")
        memory = x if memory is None else memory
        if memory.ndim != 3 or memory.shape[0] != x.shape[0] or memory.shape[2] != x.shape[2]:
            raise ShapeMismatch(f"memory {memory.shape} incompatible with {x.shape}")
        b, n, d = x.shape
        q = self._split(self.q(x))
        k = self._split(self.k(memory))
        v = self._split(self.v(memory))
        scores = T.matmul(q, T.swap_last(k)) * (1.0 / np.sqrt(d // self.heads))
        attn = T.softmax(scores)
        out = T.transpose(T.matmul(attn, v), (0, 2, 1, 3))
        return self.o(T.reshape(out, (b, n, d)))


class EncoderLayer(Module):
    """Pre-norm self-attention block followed by a pre-norm feed-forward block."""

    def __init__(self, dim, heads, ffn_dim, rng):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn_dim, dim, rng)

    def __call__(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class DecoderLayer(Module):
    """Pre-norm self-attention, cross-attention to memory, feed-forward."""

    def __init__(self, dim, heads, ffn_dim, rng):
        self.norm1 = LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, rng)
        self.norm3 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn_dim, dim, rng)

    def __call__(self, x, memory):
        x = x + self.self_attn(self.norm1(x))
        x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.ffn(self.norm3(x))


class Encoder(Module):
    def __init__(self, dim, heads, ffn_dim, layers, rng):
        self.layers = [EncoderLayer(dim, heads, ffn_dim, rng) for _ in range(layers)]
        self.norm = LayerNorm(dim)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return self.norm(x)


class Decoder(Module):
    def __init__(self, dim, heads, ffn_dim, layers, rng):
        self.layers = [DecoderLayer(dim, heads, ffn_dim, rng) for _ in range(layers)]
        self.norm = LayerNorm(dim)

    def __call__(self, x, memory):
        for layer in self.layers:
            x = layer(x, memory)
        return self.norm(x)


def multi_head_attention(q, k, v, heads):
    """Unprojected scaled dot-product attention split over ``heads``.

    Inputs are (B, N, D) tensors; useful for checks that do not need weights.
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    b, nq, d = q.shape
    if d % heads or k.shape[-1] != d or v.shape[-1] != d or k.shape[1] != v.shape[1]:
        raise ShapeMismatch("incompatible attention inputs")

    def split(x):
        return T.transpose(T.reshape(x, (b, x.shape[1], heads, d // heads)), (0, 2, 1, 3))

    attn = T.softmax(T.matmul(split(q), T.swap_last(split(k))) * (1.0 / np.sqrt(d // heads)))
    return T.reshape(T.transpose(T.matmul(attn, split(v)), (0, 2, 1, 3)), (b, nq, d))

"""Parameter containers and the neural building blocks used by the model."""

from __future__ import annotations

import math
import zlib

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def param_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one parameter, keyed by the global seed and its name path."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


class Parameter(Tensor):
    __slots__ = ("trainable",)

    def __init__(self, data, name=None, trainable=True):
        super().__init__(data, requires_grad=trainable, name=name)
        self.trainable = trainable


class Module:
    """Minimal module tree: attributes that are Parameters or Modules are children."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters() if p.trainable)


def uniform_param(name, shape, fan_in, seed, dtype):
    bound = math.sqrt(1.0 / fan_in)
    values = param_rng(seed, name).uniform(-bound, bound, size=shape)
    return Parameter(values.astype(dtype), name=name)


class Linear(Module):
    """``y = x @ W + b`` over the last axis; W is stored as (in, out)."""

    def __init__(self, name, n_in, n_out, seed, dtype=np.float64, bias=True):
        self.weight = uniform_param(f"{name}.weight", (n_in, n_out), n_in, seed, dtype)
        self.bias = uniform_param(f"{name}.bias", (n_out,), n_in, seed, dtype) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"linear expects last axis {self.n_in}, got {x.shape}")
        y = ag.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


def linear(x, weight, bias=None):
    x = ag.as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape} vs W {weight.shape}")
    y = ag.matmul(x, weight)
    return y if bias is None else y + bias


class LayerNorm(Module):
    def __init__(self, name, dim, dtype=np.float64, eps=1e-5):
        self.weight = Parameter(np.ones(dim, dtype=dtype), name=f"{name}.weight")
        self.bias = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bias")
        self.eps = eps

    def __call__(self, x):
        return ag.layer_norm(x, self.weight, self.bias, self.eps)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over the second-to-last axis."""

    def __init__(self, name, d, heads, seed, dtype=np.float64):
        if d % heads:
            raise ValueError(f"d={d} is not divisible by heads={heads}")
        self.heads = heads
        self.q = Linear(f"{name}.q", d, d, seed, dtype)
        self.k = Linear(f"{name}.k", d, d, seed, dtype)
        self.v = Linear(f"{name}.v", d, d, seed, dtype)
        self.out = Linear(f"{name}.out", d, d, seed, dtype)

    def attention_weights(self, x):
        q, k, _ = self._split_qkv(x)
        dh = q.shape[-1]
        return ag.softmax(ag.matmul(q, ag.moveaxis(k, -1, -2)) * (1.0 / math.sqrt(dh)))

    def _split_qkv(self, x):
        *lead, n, d = x.shape
        h = self.heads

        def split(t):
            # (..., n, d) -> (..., h, n, d/h)
            return ag.moveaxis(t.reshape(*lead, n, h, d // h), -2, -3)
        return split(self.q(x)), split(self.k(x)), split(self.v(x))

    def __call__(self, x):
        *lead, n, d = x.shape
        q, k, v = self._split_qkv(x)
        dh = d // self.heads
        scores = ag.matmul(q, ag.moveaxis(k, -1, -2)) * (1.0 / math.sqrt(dh))
        ctx = ag.matmul(ag.softmax(scores, axis=-1), v)
        ctx = ag.moveaxis(ctx, -3, -2).reshape(*lead, n, d)
        return self.out(ctx)


class TransformerLayer(Module):
    """Pre-norm block: ``x + MSA(LN(x))`` followed by ``+ FFN(LN(.))``."""

    def __init__(self, name, d, heads, seed, d_ff=None, dtype=np.float64, approximate_gelu=False):
        d_ff = d_ff or 2 * d
        self.norm1 = LayerNorm(f"{name}.norm1", d, dtype)
        self.attn = MultiHeadSelfAttention(f"{name}.attn", d, heads, seed, dtype)
        self.norm2 = LayerNorm(f"{name}.norm2", d, dtype)
        self.ff1 = Linear(f"{name}.ff1", d, d_ff, seed, dtype)
        self.ff2 = Linear(f"{name}.ff2", d_ff, d, seed, dtype)
        self.approximate_gelu = approximate_gelu

    def __call__(self, x):
        x = x + self.attn(self.norm1(x))
        h = ag.gelu(self.ff1(self.norm2(x)), self.approximate_gelu)
        return x + self.ff2(h)


class MLP(Module):
    """Three linear layers with GELU between consecutive layers."""

    def __init__(self, name, n_in, n_out, seed, hidden=None, dtype=np.float64,
                 activations=2, approximate_gelu=False):
        hidden = hidden or n_out
        self.fc1 = Linear(f"{name}.fc1", n_in, hidden, seed, dtype)
        self.fc2 = Linear(f"{name}.fc2", hidden, hidden, seed, dtype)
        self.fc3 = Linear(f"{name}.fc3", hidden, n_out, seed, dtype)
        if activations not in (1, 2):
            raise ValueError("activations must be 1 or 2")
        self.activations = activations
        self.approximate_gelu = approximate_gelu

    def __call__(self, x):
        h = ag.gelu(self.fc1(x), self.approximate_gelu)
        h = self.fc2(h)
        if self.activations == 2:
            h = ag.gelu(h, self.approximate_gelu)
        return self.fc3(h)


def sinusoidal_encoding(n, d, dtype=np.float64):
    """Fixed sine/cosine position table of shape (n, d)."""
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)

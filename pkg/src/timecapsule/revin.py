"""Reversible instance normalization over the temporal axis.

Tensors are batched as ``(batch, v, t, 1)``. Statistics come from the
lookback window only and are reused to de-normalize the forecast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import autograd as ag
from .nn.layers import Module, Parameter


@dataclass
class RevinStats:
    mean: np.ndarray  # (batch, v, 1, 1)
    std: np.ndarray  # (batch, v, 1, 1), sqrt(var + eps)


def compute_stats(x: np.ndarray, eps: float) -> RevinStats:
    if x.shape[-2] < 2:
        raise ValueError(f"need at least 2 time steps to normalize, got {x.shape[-2]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in RevIN input")
    mean = x.mean(axis=(-2, -1), keepdims=True)
    var = x.var(axis=(-2, -1), keepdims=True)
    return RevinStats(mean=mean, std=np.sqrt(var + eps))


class RevIN(Module):
    def __init__(self, name, v, affine=True, eps=1e-5, dtype=np.float64):
        self.eps = eps
        self.v = v
        if affine:
            self.gamma = Parameter(np.ones((v, 1, 1), dtype=dtype), name=f"{name}.gamma")
            self.beta = Parameter(np.zeros((v, 1, 1), dtype=dtype), name=f"{name}.beta")
        else:
            self.gamma = self.beta = None

    def normalize(self, x):
        """Return ``(x_norm, stats)`` for raw input ``x`` of shape (B, v, t, 1)."""
        x = ag.as_tensor(x)
        if x.shape[-3] != self.v:
            raise ValueError(f"expected {self.v} variates, got {x.shape}")
        stats = compute_stats(x.data, self.eps)
        out = (x - stats.mean) * (1.0 / stats.std)
        if self.gamma is not None:
            out = out * self.gamma + self.beta
        return out, stats

    def denormalize(self, y, stats: RevinStats):
        y = ag.as_tensor(y)
        if y.shape[-3] != self.v or stats.mean.shape[-3] != self.v:
            raise ValueError("RevIN stats and tensor disagree on the variate count")
        if self.gamma is not None:
            y = ag.div(y - self.beta, self.gamma)
        return y * stats.std + stats.mean


def revin_normalize(x, eps=1e-5, gamma=1.0, beta=0.0):
    """Functional form on plain arrays, shape (..., v, t, 1)."""
    x = np.asarray(x)
    stats = compute_stats(x, eps)
    return gamma * (x - stats.mean) / stats.std + beta, stats


def revin_denormalize(y, stats: RevinStats, gamma=1.0, beta=0.0):
    y = np.asarray(y)
    if y.shape[-3] != stats.mean.shape[-3]:
        raise ValueError("RevIN stats and tensor disagree on the variate count")
    return (y - beta) / gamma * stats.std + stats.mean

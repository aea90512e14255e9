"""Internal representation prediction against an EMA target encoder."""

from __future__ import annotations

import copy
import math

import numpy as np

from .config import JepaConfig
from .nn import autograd as ag
from .revin import compute_stats


def preprocess_target(y, t_x, beta=0.9):
    """Bring a horizon window (..., v, t_y, 1) to the lookback length ``t_x``.

    Shorter horizons are zero-padded at the end. Longer ones are cut into
    ``ceil(t_y / t_x)`` chunks (the last one zero-padded) and merged with
    ``S_1 = c_1, S_k = beta * S_{k-1} + (1 - beta) * c_k``.
    """
    y = np.asarray(y)
    t_y = y.shape[-2]
    if t_x < 1 or t_y < 1:
        raise ValueError("sequence lengths must be positive")
    if t_y == t_x:
        return y.copy()
    n_chunks = math.ceil(t_y / t_x)
    pad = [(0, 0)] * y.ndim
    pad[-2] = (0, n_chunks * t_x - t_y)
    padded = np.pad(y, pad)
    if n_chunks == 1:
        return padded
    chunks = np.split(padded, n_chunks, axis=-2)
    smoothed = chunks[0]
    for chunk in chunks[1:]:
        smoothed = beta * smoothed + (1.0 - beta) * chunk
    return smoothed


def ema_update(target_params, online_params, momentum):
    """In place: ``target <- momentum * target + (1 - momentum) * online``."""
    target_params = list(target_params)
    online_params = list(online_params)
    if len(target_params) != len(online_params):
        raise ValueError("target and online parameter lists differ in length")
    for t, o in zip(target_params, online_params):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch in EMA update: {t.shape} vs {o.shape}")
        t.data *= momentum
        t.data += (1.0 - momentum) * o.data


def jepa_loss(predicted, target, distance="huber", delta=1.0):
    """Distance between predicted and (stop-gradient) target representations."""
    predicted = ag.as_tensor(predicted)
    target = ag.as_tensor(target).detach()
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    if distance == "huber":
        return ag.huber_loss(predicted, target, delta)
    diff = predicted - target
    return (diff * diff).mean()


class JepaState:
    """Holds the EMA target encoder and the per-epoch JEPA loss log."""

    def __init__(self, encoder, cfg: JepaConfig):
        self.cfg = cfg
        self.target = copy.deepcopy(encoder)
        for p in self.target.parameters():
            p.grad = None
        self.log: list[float] = []

    def update(self, encoder):
        ema_update(self.target.parameters(), encoder.parameters(), self.cfg.momentum)

    def target_representation(self, y_raw, t_x, eps):
        """Encode a horizon window with the target encoder, noise-free."""
        # normalize the real horizon first so padding sits at the window mean
        if y_raw.shape[-2] >= 2:
            stats = compute_stats(y_raw, eps)
            y_raw = (y_raw - stats.mean) / stats.std
        y = preprocess_target(y_raw, t_x, self.cfg.chunk_beta)
        x3 = self.target.represent(ag.Tensor(y.astype(y_raw.dtype, copy=False)))
        return x3.detach()

    def loss(self, forecast, y_raw, t_x, eps, delta=1.0):
        left = forecast.decoder.y0 if self.cfg.pair == "predictor" else forecast.encoder.x3
        target = self.target_representation(np.asarray(y_raw, dtype=left.dtype), t_x, eps)
        return jepa_loss(left, target, self.cfg.distance, delta)

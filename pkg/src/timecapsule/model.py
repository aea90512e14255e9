"""The TimeCapsule forecaster.

All model tensors carry a leading batch axis: ``(batch, v, t, l)``. Mode
numbers (T=2, L=3, V=1) therefore coincide with numpy axis indices.

Encoder::

    X0 [v, t_x, 1] --T--> X1 [v, t_c, 1] --L--> X2 [v, t_c, l] --V--> X3 [v_c, t_c, l]

with residuals ``B1 = X0 - X1 ×_2 M_T^T``, ``B2 = X1 - X2 ×_3 M_L^T`` and
``B3 = X2 - X3 ×_1 M_V^T``. Decoder::

    Y0 = predictor(X3)
    Y1 = MLP_v(cat_v(Y0, B3))   [v, t_c, l]
    Y2 = MLP_l(cat_l(Y1, B2))   [v, t_c, 1]
    Y3 = MLP_t(cat_t(Y2, B1))   [v, t_x, 1]
    Y  = proj_t(Y3)             [v, t_y, 1]
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .nn import autograd as ag
from .nn.layers import (
    MLP,
    Linear,
    Module,
    TransformerLayer,
    sinusoidal_encoding,
    uniform_param,
)
from .revin import RevIN, RevinStats

MODE_AXIS = {"V": 1, "T": 2, "L": 3}


@dataclass
class EncoderState:
    x0: ag.Tensor
    x1: ag.Tensor
    x2: ag.Tensor
    x3: ag.Tensor
    b1: ag.Tensor
    b2: ag.Tensor
    b3: ag.Tensor


@dataclass
class DecoderState:
    y0: ag.Tensor
    y1: ag.Tensor
    y2: ag.Tensor
    y3: ag.Tensor
    y: ag.Tensor


@dataclass
class Forecast:
    y_hat: ag.Tensor
    encoder: EncoderState
    decoder: DecoderState
    stats: RevinStats


def _apply_along(layer, x, axis):
    """Apply a last-axis layer to ``axis`` of a (B, v, t, l) tensor."""
    return ag.moveaxis(layer(ag.moveaxis(x, axis, -1)), -1, axis)


class TransBlock(Module):
    """Compress one mode: embed, (PE), (noise), ×M, transformer stack, unembed."""

    def __init__(self, name, mode, in_shape, compressed, extended, cfg: ModelConfig, seed, dtype):
        self.mode = mode
        self.axis = MODE_AXIS[mode]
        self.in_shape = tuple(in_shape)
        self.token_len = in_shape[self.axis - 1]
        others = [n for i, n in enumerate(in_shape) if i != self.axis - 1]
        self.feature_len = others[0] * others[1]
        self.compressed = compressed
        self.out_shape = list(in_shape)
        self.out_shape[self.axis - 1] = compressed
        self.out_shape = tuple(self.out_shape)

        self.embed = Linear(f"{name}.embed", self.feature_len, cfg.d, seed, dtype)
        self.E = uniform_param(f"{name}.E", (extended, self.token_len), self.token_len, seed, dtype)
        self.C = uniform_param(f"{name}.C", (compressed, extended), extended, seed, dtype)
        self.layers = [
            TransformerLayer(f"{name}.layers.{i}", cfg.d, cfg.heads, seed, cfg.d_ff, dtype,
                             cfg.approximate_gelu)
            for i in range(1 + cfg.tunnels)
        ]
        self.unembed = Linear(f"{name}.unembed", cfg.d, self.feature_len, seed, dtype)
        self.use_pe = mode == "T" and cfg.positional_encoding
        self.pe = sinusoidal_encoding(self.token_len, cfg.d, dtype) if self.use_pe else None
        self.noise = cfg.noise
        self.noise_std = cfg.noise_std

    def factor(self):
        """Composite transform ``M = C @ E`` of shape (compressed, token_len)."""
        return ag.matmul(self.C, self.E)

    def lift(self, x):
        """Map a compressed tensor back to this block's input length via ``M^T``."""
        return ag.mode_product(x, ag.transpose(self.factor(), (1, 0)), self.axis)

    def __call__(self, x, training=False, rng=None):
        if tuple(x.shape[1:]) != self.in_shape:
            raise ValueError(f"{self.mode}-block expects (*, {self.in_shape}), got {x.shape}")
        batch = x.shape[0]
        rest = [n for i, n in enumerate(self.in_shape) if i != self.axis - 1]
        h = ag.moveaxis(x, self.axis, 1).reshape(batch, self.token_len, self.feature_len)
        h = self.embed(h)
        if self.use_pe:
            h = h + self.pe
        if training and self.noise and self.noise_std > 0:
            if rng is None:
                raise ValueError("training with noise needs a random generator")
            h = h + self.noise_std * rng.standard_normal(h.shape).astype(h.dtype)
        h = ag.mode_product(h, self.factor(), 1)
        for layer in self.layers:
            h = layer(h)
        h = self.unembed(h)
        h = h.reshape(batch, self.compressed, *rest)
        return ag.moveaxis(h, 1, self.axis)


class Encoder(Module):
    def __init__(self, name, cfg: ModelConfig, seed, dtype):
        v, t_x, t_c, l, v_c = cfg.v, cfg.t_x, cfg.t_c, cfg.l, cfg.v_c
        self.T = TransBlock(f"{name}.T", "T", (v, t_x, 1), t_c, cfg.t_ext, cfg, seed, dtype)
        self.L = TransBlock(f"{name}.L", "L", (v, t_c, 1), l, cfg.l_ext, cfg, seed, dtype)
        self.V = TransBlock(f"{name}.V", "V", (v, t_c, l), v_c, cfg.v_ext, cfg, seed, dtype)
        self.residual_info = cfg.residual_info

    def __call__(self, x0, training=False, rng=None) -> EncoderState:
        x1 = self.T(x0, training, rng)
        x2 = self.L(x1, training, rng)
        x3 = self.V(x2, training, rng)
        if self.residual_info == "residual":
            b1 = x0 - self.T.lift(x1)
            b2 = x1 - self.L.lift(x2)
            b3 = x2 - self.V.lift(x3)
        elif self.residual_info == "original":
            b1, b2, b3 = x0, x1, x2
        else:
            b1, b2, b3 = (ag.Tensor(np.zeros(t.shape, dtype=t.dtype)) for t in (x0, x1, x2))
        return EncoderState(x0, x1, x2, x3, b1, b2, b3)

    def represent(self, x0, training=False, rng=None):
        """Encoder output X3 only, skipping the residual computation."""
        return self.V(self.L(self.T(x0, training, rng), training, rng), training, rng)


class ReprePredictor(Module):
    def __init__(self, name, cfg: ModelConfig, seed, dtype):
        self.kind = cfg.repre_predictor
        if self.kind == "temporal":
            self.linear = Linear(name, cfg.t_c, cfg.t_c, seed, dtype)
        else:
            n = cfg.v_c * cfg.t_c * cfg.l
            self.linear = Linear(name, n, n, seed, dtype)

    def __call__(self, x3):
        if self.kind == "temporal":
            return _apply_along(self.linear, x3, 2)
        shape = x3.shape
        return self.linear(x3.reshape(shape[0], -1)).reshape(shape)


class Decoder(Module):
    def __init__(self, name, cfg: ModelConfig, seed, dtype):
        kw = dict(seed=seed, hidden=cfg.mlp_hidden, dtype=dtype,
                  activations=cfg.mlp_activations, approximate_gelu=cfg.approximate_gelu)
        self.variate = MLP(f"{name}.variate", cfg.v_c + cfg.v, cfg.v, **kw)
        self.level = MLP(f"{name}.level", cfg.l + 1, 1, **kw)
        self.temporal = MLP(f"{name}.temporal", cfg.t_c + cfg.t_x, cfg.t_x, **kw)

    def __call__(self, y0, state: EncoderState):
        y1 = _apply_along(self.variate, ag.concat([y0, state.b3], axis=1), 1)
        y2 = _apply_along(self.level, ag.concat([y1, state.b2], axis=3), 3)
        y3 = _apply_along(self.temporal, ag.concat([y2, state.b1], axis=2), 2)
        return y1, y2, y3


class TimeCapsule(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 2021):
        self.cfg = cfg
        self.seed = seed
        dtype = np.dtype(cfg.dtype)
        self.dtype = dtype
        self.revin = RevIN("revin", cfg.v, cfg.revin_affine, cfg.revin_eps, dtype)
        self.encoder = Encoder("encoder", cfg, seed, dtype)
        self.predictor = ReprePredictor("predictor", cfg, seed, dtype)
        self.decoder = Decoder("decoder", cfg, seed, dtype)
        self.proj = Linear("proj", cfg.t_x, cfg.t_y, seed, dtype)
        self.noise_rng = noise_generator(seed)

    def forecast(self, x_raw, training=False, rng=None) -> Forecast:
        """Raw lookback ``(B, v, t_x, 1)`` to raw forecast ``(B, v, t_y, 1)``."""
        if isinstance(x_raw, ag.Tensor):
            x_raw = x_raw.data
        x_raw = ag.Tensor(np.asarray(x_raw, dtype=self.dtype))
        cfg = self.cfg
        if x_raw.ndim == 3:
            x_raw = x_raw.reshape(1, *x_raw.shape)
        if tuple(x_raw.shape[1:]) != (cfg.v, cfg.t_x, 1):
            raise ValueError(f"expected input (*, {cfg.v}, {cfg.t_x}, 1), got {x_raw.shape}")
        if training and rng is None:
            rng = self.noise_rng
        x0, stats = self.revin.normalize(x_raw)
        enc = self.encoder(x0, training, rng)
        y0 = self.predictor(enc.x3)
        y1, y2, y3 = self.decoder(y0, enc)
        y = _apply_along(self.proj, y3, 2)
        y_hat = self.revin.denormalize(y, stats)
        return Forecast(y_hat, enc, DecoderState(y0, y1, y2, y3, y), stats)

    __call__ = forecast

    def level_factor(self) -> np.ndarray:
        """Level-expansion factor ``M_L`` of shape (l, 1)."""
        return self.encoder.L.factor().data.copy()


def noise_generator(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(b"noise")])


def decompose_levels(x, m_l):
    """Split a series into level sub-series ``x * m_k``.

    ``x`` has shape (v, t, 1); ``m_l`` is the (l, 1) level-expansion factor.
    Returns ``(subseries [l, v, t], total [v, t], sum of m_k)``.
    """
    from .tensor_core import mode_product

    x = np.asarray(x, dtype=np.float64)
    m_l = np.asarray(m_l, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 1:
        raise ValueError(f"expected a (v, t, 1) series, got {x.shape}")
    if m_l.ndim != 2 or m_l.shape[1] != 1:
        raise ValueError(f"level factor must have shape (l, 1), got {m_l.shape}")
    expanded = mode_product(x, m_l, 3)  # (v, t, l)
    subseries = np.moveaxis(expanded, 2, 0)
    return subseries, subseries.sum(axis=0), float(m_l.sum())


# parameter / FLOP accounting --------------------------------------------

def _linear(n_in, n_out, bias=True):
    return n_in * n_out + (n_out if bias else 0)


def _layer_params(d, d_ff):
    return 2 * 2 * d + 4 * _linear(d, d) + _linear(d, d_ff) + _linear(d_ff, d)


def _mlp_params(n_in, n_out, hidden):
    h = hidden or n_out
    return _linear(n_in, h) + _linear(h, h) + _linear(h, n_out)


def _block_specs(cfg: ModelConfig):
    """(feature_len, token_len, extended_len, compressed_len) for T, L, V."""
    return [
        (cfg.v, cfg.t_x, cfg.t_ext, cfg.t_c),
        (cfg.v * cfg.t_c, 1, cfg.l_ext, cfg.l),
        (cfg.t_c * cfg.l, cfg.v, cfg.v_ext, cfg.v_c),
    ]


def count_params_flops(cfg: ModelConfig):
    """Closed-form trainable parameter count and forward FLOPs per instance.

    FLOPs count one multiply-add as 2 and cover matrix products only
    (linear layers, attention scores and mixing, mode products, forming the
    composite factors). Elementwise work (softmax, GELU, layer norm, noise,
    RevIN) is ignored.
    """
    d = cfg.d
    d_ff = cfg.d_ff or 2 * d
    n_layers = 1 + cfg.tunnels
    params = 0
    flops = 0
    for feat, tok, ext, comp in _block_specs(cfg):
        params += _linear(feat, d) + ext * tok + comp * ext
        params += n_layers * _layer_params(d, d_ff) + _linear(d, feat)
        flops += 2 * tok * feat * d              # embed
        flops += 2 * comp * ext * tok            # M = C E
        flops += 2 * comp * tok * d              # M applied to tokens
        per_layer = 4 * 2 * comp * d * d + 2 * 2 * comp * comp * d + 2 * 2 * comp * d * d_ff
        flops += n_layers * per_layer
        flops += 2 * comp * d * feat             # unembed
        if cfg.residual_info == "residual":
            flops += 2 * tok * comp * feat       # lift by M^T
    if cfg.revin_affine:
        params += 2 * cfg.v
    n_repr = cfg.v_c * cfg.t_c * cfg.l
    if cfg.repre_predictor == "temporal":
        params += _linear(cfg.t_c, cfg.t_c)
        flops += 2 * cfg.v_c * cfg.l * cfg.t_c * cfg.t_c
    else:
        params += _linear(n_repr, n_repr)
        flops += 2 * n_repr * n_repr
    h = cfg.mlp_hidden
    stages = [
        (cfg.v_c + cfg.v, cfg.v, cfg.t_c * cfg.l),
        (cfg.l + 1, 1, cfg.v * cfg.t_c),
        (cfg.t_c + cfg.t_x, cfg.t_x, cfg.v),
    ]
    for n_in, n_out, tokens in stages:
        params += _mlp_params(n_in, n_out, h)
        hid = h or n_out
        flops += 2 * tokens * (n_in * hid + hid * hid + hid * n_out)
    params += _linear(cfg.t_x, cfg.t_y)
    flops += 2 * cfg.v * cfg.t_x * cfg.t_y
    return params, flops

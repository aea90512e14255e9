"""Finite-difference gradient checks over every primitive and the tiny model."""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .model import TimeCapsule
from .nn import autograd as ag
from .nn.gradcheck import check_function, grad_check
from .nn.layers import MLP, Linear, MultiHeadSelfAttention, TransformerLayer

TINY = dict(v=3, t_x=16, t_y=8, t_c=4, l=2, v_c=2, d=8, heads=2, dtype="float64")


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


def _weighted(out, w):
    # random projection to a scalar so every output coordinate matters
    return (out * w).sum()


def primitive_checks(seed=0, h=1e-5):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal
    results = {}

    w = r((3, 4))
    results["add"] = check_function(lambda a, b: _weighted(a + b, w), r((3, 4)), r((1, 4)), h=h)
    results["mul"] = check_function(lambda a, b: _weighted(a * b, w), r((3, 4)), r((3, 1)), h=h)
    results["div"] = check_function(lambda a, b: _weighted(ag.div(a, b), w), r((3, 4)),
                                    2.0 + rng.random((3, 4)), h=h)
    wm = r((2, 3, 4))
    results["matmul"] = check_function(lambda a, b: _weighted(a @ b, wm), r((2, 3, 5)), r((5, 4)),
                                       h=h)
    results["gelu"] = check_function(lambda a: _weighted(ag.gelu(a), w), 2 * r((3, 4)), h=h)
    results["gelu_tanh"] = check_function(lambda a: _weighted(ag.gelu(a, True), w), 2 * r((3, 4)),
                                          h=h)
    results["tanh"] = check_function(lambda a: _weighted(ag.tanh(a), w), r((3, 4)), h=h)
    results["exp"] = check_function(lambda a: _weighted(ag.exp(a), w), r((3, 4)), h=h)
    results["softmax"] = check_function(lambda a: _weighted(ag.softmax(a), w), r((3, 4)), h=h)
    results["layer_norm"] = check_function(
        lambda a, g, b: _weighted(ag.layer_norm(a, g, b), w), r((3, 4)), 1 + r(4), r(4), h=h)
    results["huber"] = check_function(lambda a, b: ag.huber_loss(a, b, 0.7), r((3, 4)), r((3, 4)),
                                      h=h)
    w5 = r((4, 2, 6))
    results["mode_product"] = check_function(
        lambda x, m: _weighted(ag.mode_product(x, m, 1), w5), r((4, 5, 6)), r((2, 5)), h=h)
    wc = r((3, 7))
    results["concat"] = check_function(lambda a, b: _weighted(ag.concat([a, b], 1), wc),
                                       r((3, 4)), r((3, 3)), h=h)
    wt = r((4, 2, 3))
    results["transpose_reshape"] = check_function(
        lambda a: _weighted(ag.moveaxis(a.reshape(2, 3, 4), -1, 0), wt), r((6, 4)), h=h)
    w3 = r(3)
    results["mean"] = check_function(lambda a: (a.mean(axis=1) * w3).sum(), r((3, 4)), h=h)

    lin = Linear("lin", 4, 2, seed, np.float64)
    x = ag.Tensor(r((3, 4)), requires_grad=True)
    wl = r((3, 2))
    results["linear"] = grad_check(lambda x, W, b: _weighted(ag.matmul(x, W) + b, wl),
                                   [x, lin.weight, lin.bias], h=h)

    for name, module, shape in (
        ("attention", MultiHeadSelfAttention("mha", 8, 2, seed, np.float64), (2, 4, 8)),
        ("transformer_layer", TransformerLayer("tl", 8, 2, seed, dtype=np.float64), (2, 4, 8)),
        ("mlp", MLP("mlp", 5, 3, seed, dtype=np.float64), (2, 4, 5)),
    ):
        x = ag.Tensor(r(shape), requires_grad=True)
        wm = r(module(x).shape)
        results[name] = grad_check(lambda x, *_: _weighted(module(x), wm),
                                   [x, *module.parameters()], h=h)
    return results


def model_check(cfg: ModelConfig | None = None, seed=2021, h=1e-5, max_coords=6, batch=2):
    """Max relative error over sampled coordinates of every model parameter."""
    cfg = cfg or tiny_config()
    model = TimeCapsule(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype)
    # move RevIN affine off its identity init so its gradient path is exercised
    model.revin.gamma.data += 0.1 * rng.standard_normal(model.revin.gamma.shape).astype(dtype)
    model.revin.beta.data += 0.1 * rng.standard_normal(model.revin.beta.shape).astype(dtype)
    x = rng.standard_normal((batch, cfg.v, cfg.t_x, 1)).astype(dtype)
    y = rng.standard_normal((batch, cfg.v, cfg.t_y, 1)).astype(dtype)
    params = model.parameters()

    def loss(*_):
        out = model(x, training=False)
        return ag.huber_loss(out.y_hat, y, 1.0)

    return grad_check(loss, params, h=h, max_coords=max_coords, seed=seed)


def run_suite(h=1e-5):
    results = primitive_checks(h=h)
    results["model"] = model_check(h=h)
    return results

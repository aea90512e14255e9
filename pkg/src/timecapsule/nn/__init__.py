from .autograd import Tensor, concat, gelu, huber_loss, layer_norm, matmul, mode_product, softmax
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    MLP,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    Parameter,
    TransformerLayer,
    linear,
    sinusoidal_encoding,
)
from .optim import AdamW

__all__ = [
    "AdamW", "LayerNorm", "Linear", "MLP", "Module", "MultiHeadSelfAttention", "Parameter",
    "Tensor", "TransformerLayer", "concat", "gelu", "grad_check", "huber_loss", "layer_norm",
    "linear", "load_checkpoint", "matmul", "mode_product", "save_checkpoint", "sinusoidal_encoding",
    "softmax",
]

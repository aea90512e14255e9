"""TimeCapsule: tensor-compressed long-term multivariate forecasting."""

from .config import JepaConfig, ModelConfig, RunConfig
from .model import TimeCapsule, count_params_flops, decompose_levels
from .tensor_core import fold, mode_product, unfold

__version__ = "0.1.0"

__all__ = [
    "JepaConfig", "ModelConfig", "RunConfig", "TimeCapsule", "count_params_flops",
    "decompose_levels", "fold", "mode_product", "unfold",
]

"""Small dense-network engine with analytic backpropagation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, grad_check, relative_error
from .layers import (
    BatchNorm1d,
    Dropout,
    Linear,
    Parameter,
    ReLU,
    ResidualBlock,
    Sequential,
    residual_mlp,
)
from .optim import Adam, mse_loss
from .rng import RngStream

__all__ = [
    "Adam", "BatchNorm1d", "Dropout", "Linear", "Parameter", "ReLU", "ResidualBlock",
    "RngStream", "Sequential", "check_gradients", "grad_check", "load_checkpoint",
    "mse_loss", "relative_error", "residual_mlp", "save_checkpoint",
]

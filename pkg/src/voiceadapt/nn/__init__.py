"""Minimal reverse-mode network core: layers, MSE, Adam, gradient checks, weight files."""

from .gradcheck import check_gradients, kink_free_inputs, numerical_gradients, relative_error
from .layers import (
    LayerSpec,
    avg_pool2d,
    batch_norm,
    conv2d,
    dropout,
    fully_connected,
    global_avg_pool,
    relu,
)
from .model import Layer, ModelWeights, backward, build_model, check_shapes, forward, mse_loss
from .optim import AdamState, adam_step
from .serialize import load_weights, save_weights
from .train import JsonlLog, evaluate_mse, fit

__all__ = [
    "LayerSpec", "Layer", "ModelWeights", "AdamState",
    "conv2d", "fully_connected", "batch_norm", "relu", "avg_pool2d", "global_avg_pool", "dropout",
    "build_model", "check_shapes", "forward", "backward", "mse_loss", "adam_step",
    "save_weights", "load_weights", "check_gradients", "kink_free_inputs", "numerical_gradients", "relative_error",
    "fit", "evaluate_mse", "JsonlLog",
]

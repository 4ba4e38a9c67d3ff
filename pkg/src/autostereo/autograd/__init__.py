"""Reverse-mode automatic differentiation over NCHW numpy tensors."""

from . import checkpoint, nn, ops, optim
from .ops import (
    BatchNormState,
    batch_norm,
    concat,
    conv2d,
    disparity_features,
    disparity_features_naive,
    global_avg_pool,
    instance_norm,
    linear,
    mse_loss,
    relu,
    softmax_ce_loss,
    tv_loss,
    upsample_nearest,
)
from .optim import Adam, AdamState, adam_step, sgd_step
from .tensor import Tensor, as_tensor, is_grad_enabled, no_grad

__all__ = [
    "Tensor", "as_tensor", "no_grad", "is_grad_enabled",
    "conv2d", "disparity_features", "disparity_features_naive", "relu", "batch_norm",
    "BatchNormState", "instance_norm", "upsample_nearest", "linear", "global_avg_pool",
    "mse_loss", "softmax_ce_loss", "tv_loss", "concat",
    "Adam", "AdamState", "adam_step", "sgd_step",
    "nn", "ops", "optim", "checkpoint",
]

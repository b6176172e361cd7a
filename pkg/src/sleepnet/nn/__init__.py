"""Minimal numpy neural engine: layers, losses and Adam."""

from .layers import (
    BatchNormState,
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    maxpool1d_backward,
    maxpool1d_forward,
    maxpool_indices,
    relu_backward,
    relu_forward,
)
from .losses import mse_loss, softmax, softmax_crossentropy
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "BatchNormState",
    "adam_step",
    "batchnorm_backward",
    "batchnorm_forward",
    "conv1d_backward",
    "conv1d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "maxpool1d_backward",
    "maxpool1d_forward",
    "maxpool_indices",
    "mse_loss",
    "relu_backward",
    "relu_forward",
    "softmax",
    "softmax_crossentropy",
]

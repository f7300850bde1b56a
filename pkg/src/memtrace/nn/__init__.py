"""From-scratch neural network kernels, models, and trainer."""

from memtrace.nn.checkpoint import (
    load_checkpoint,
    load_loss_curve,
    save_checkpoint,
    save_loss_curve,
)
from memtrace.nn.gradcheck import numeric_gradient, relative_error
from memtrace.nn.layers import (
    conv2d_valid,
    dense_forward,
    dropout,
    maxpool,
    relu,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from memtrace.nn.models import Cnn, CnnConfig, Mlp, MlpConfig
from memtrace.nn.training import TrainConfig, TrainResult, build_model, predict, train

__all__ = [
    "Cnn",
    "CnnConfig",
    "Mlp",
    "MlpConfig",
    "TrainConfig",
    "TrainResult",
    "build_model",
    "conv2d_valid",
    "dense_forward",
    "dropout",
    "load_checkpoint",
    "load_loss_curve",
    "maxpool",
    "numeric_gradient",
    "predict",
    "relative_error",
    "relu",
    "save_checkpoint",
    "save_loss_curve",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
    "train",
]

"""Compact recurrent VAE over melody token sequences with its own
reverse-mode differentiation, training loop, and accuracy metric."""

from .model import (
    CheckpointError,
    Dims,
    ModelParams,
    init_params,
    load_checkpoint,
    param_shapes,
    save_checkpoint,
)
from .network import (
    NonFiniteActivation,
    LossBreakdown,
    decode_sample,
    decode_teacher_forced,
    elbo_loss,
    encode,
    loss_and_gradients,
    reparameterize,
    softmax,
)
from .training import (
    EmptyDataset,
    TrainConfig,
    reconstruction_accuracy,
    train,
)
from .gradcheck import gradient_check

__all__ = [
    "CheckpointError",
    "Dims",
    "EmptyDataset",
    "LossBreakdown",
    "ModelParams",
    "NonFiniteActivation",
    "TrainConfig",
    "decode_sample",
    "decode_teacher_forced",
    "elbo_loss",
    "encode",
    "gradient_check",
    "init_params",
    "load_checkpoint",
    "loss_and_gradients",
    "param_shapes",
    "reconstruction_accuracy",
    "reparameterize",
    "save_checkpoint",
    "softmax",
    "train",
]

"""Trainable conditional residual predictor with hand-rolled backprop."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .denoiser import DenoiserConfig, init_model, predict
from .loss import loss_and_grads, perceptual_proxy
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainResult, train

__all__ = [
    "AdamState",
    "Checkpoint",
    "DenoiserConfig",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "init_model",
    "load_checkpoint",
    "loss_and_grads",
    "perceptual_proxy",
    "predict",
    "save_checkpoint",
    "train",
]

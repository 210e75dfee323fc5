"""Numpy LeNet1D: layers, model, optimiser, training loop and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import ModelState, backward, forward, init_model, lenet1d_architecture
from .optim import AdamWState, adamw_step
from .train import TrainConfig, TrainHistory, predict, predict_raw, train

__all__ = [
    "AdamWState", "ModelState", "TrainConfig", "TrainHistory", "adamw_step", "backward",
    "forward", "init_model", "lenet1d_architecture", "load_checkpoint", "predict",
    "predict_raw", "save_checkpoint", "train",
]

"""Desk-scale latent diffusion used to exercise the curated data."""

from .codec import ToyCodec, make_basis, toy_decode, toy_encode
from .loss import masked_loss, masked_loss_grad, masked_loss_torch
from .model import ToyDenoiser
from .schedule import NoiseSchedule, add_noise
from .train import (
    LatentNorm, ToyTrainConfig, TrainResult, evaluate_loss, load_checkpoint,
    loss_trace_csv, predict_image, sample_view, save_checkpoint, train_toy,
)

__all__ = [
    "ToyCodec", "make_basis", "toy_decode", "toy_encode",
    "masked_loss", "masked_loss_grad", "masked_loss_torch",
    "ToyDenoiser", "NoiseSchedule", "add_noise",
    "LatentNorm", "ToyTrainConfig", "TrainResult", "evaluate_loss", "load_checkpoint",
    "loss_trace_csv", "predict_image", "sample_view", "save_checkpoint", "train_toy",
]

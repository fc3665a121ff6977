"""Conditional velocity-diffusion backbone: schedule, sampler, denoiser, encoder."""

from .denoiser import Denoiser, DenoiserConfig, time_embedding
from .schedule import (add_noise, alpha_beta, ddim_step, recover, sample,
                       time_grid, v_target)
from .speaker_encoder import SpeakerEncoder
from .training import DiffusionModel, TrainSettings, train_diffusion

__all__ = [
    "alpha_beta", "add_noise", "v_target", "recover", "ddim_step", "sample",
    "time_grid", "Denoiser", "DenoiserConfig", "time_embedding",
    "SpeakerEncoder", "DiffusionModel", "TrainSettings", "train_diffusion",
]

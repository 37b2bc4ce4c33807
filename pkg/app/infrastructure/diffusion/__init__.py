"""Denoising diffusion: schedules, forward noising, samplers."""
from app.infrastructure.diffusion.schedule import NoiseSchedule, linear_schedule, predict_z0, q_sample, schedule_from_config
from app.infrastructure.diffusion.sampler import (
    ddim_sample,
    ddim_step,
    ddim_substeps,
    ddpm_sample,
    ddpm_step,
    diffusion_loss,
)

__all__ = [
    "NoiseSchedule",
    "linear_schedule",
    "predict_z0",
    "q_sample",
    "schedule_from_config",
    "ddim_sample",
    "ddim_step",
    "ddim_substeps",
    "ddpm_sample",
    "ddpm_step",
    "diffusion_loss",
]

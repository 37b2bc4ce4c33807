"""Diffusion loss and reverse-process samplers (DDPM ancestral and DDIM)."""
import logging
from typing import Any, Callable, List, Sequence, Tuple

import numpy as np

from app.domain.exceptions import ContractViolationError, ScheduleError
from app.infrastructure.diffusion.schedule import NoiseSchedule, predict_z0
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.tensor import Tensor


logger = logging.getLogger(__name__)

# denoiser(z_k, k, condition, action) -> eps_hat, all numpy
Denoiser = Callable[[np.ndarray, int, Any, Any], np.ndarray]


def diffusion_loss(eps_hat: Tensor, eps) -> Tensor:
    """Mean squared error between predicted and injected noise."""
    eps_shape = eps.shape if hasattr(eps, "shape") else np.shape(eps)
    if tuple(eps_hat.shape) != tuple(eps_shape):
        raise ContractViolationError(f"eps_hat shape {eps_hat.shape} does not match eps shape {eps_shape}")
    return ops.mse_loss(eps_hat, eps)


def ddpm_step(z_k: np.ndarray, eps_hat: np.ndarray, k: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """
    One ancestral step z^k -> z^{k-1}.

    z^{k-1} = (z^k - (1 - alpha_k) / sqrt(1 - alpha_bar_k) * eps_hat) / sqrt(alpha_k) + sigma_k * noise

    Raises:
        ScheduleError: If k is out of range or noise is nonzero at k = 1
    """
    alpha = float(schedule.alpha(k))
    alpha_bar = float(schedule.alpha_bar(k))
    sigma = float(schedule.sigma(k))
    if k == 1 and np.any(np.asarray(noise) != 0):
        raise ScheduleError("the final step (k = 1) must not add noise")
    mean = (z_k - (1.0 - alpha) / np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha)
    return mean + sigma * noise


def ddim_step(
    z_k: np.ndarray,
    eps_hat: np.ndarray,
    k: int,
    k_prev: int,
    schedule: NoiseSchedule,
    clip_sample: float = 3.0,
) -> np.ndarray:
    """Deterministic (sigma = 0) jump from step k to k_prev < k (k_prev = 0 yields z0)."""
    alpha_bar = float(schedule.alpha_bar(k))
    alpha_bar_prev = float(schedule.alpha_bar(k_prev))
    z0 = np.clip(predict_z0(z_k, eps_hat, k, schedule), -clip_sample, clip_sample)
    eps = (z_k - np.sqrt(alpha_bar) * z0) / np.sqrt(1.0 - alpha_bar)
    return np.sqrt(alpha_bar_prev) * z0 + np.sqrt(1.0 - alpha_bar_prev) * eps


def ddim_substeps(k_steps: int, num_steps: int) -> List[int]:
    """Evenly spaced, strictly increasing step subset ending at K_steps."""
    if num_steps < 1:
        raise ScheduleError(f"need at least one sampling step, got {num_steps}")
    num_steps = min(num_steps, k_steps)
    raw = np.round(np.linspace(k_steps / num_steps, k_steps, num_steps)).astype(int)
    steps: List[int] = []
    for value in raw:
        value = max(int(value), steps[-1] + 1 if steps else 1)
        steps.append(value)
    steps[-1] = k_steps
    return steps


def _check_substeps(substeps: Sequence[int], schedule: NoiseSchedule) -> Tuple[int, ...]:
    steps = tuple(int(k) for k in substeps)
    if not steps:
        raise ScheduleError("substeps must not be empty")
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ScheduleError(f"substeps must be strictly increasing, got {steps}")
    if steps[0] < 1 or steps[-1] != schedule.k_steps:
        raise ScheduleError(f"substeps must lie in [1, {schedule.k_steps}] and end at K_steps")
    return steps


def ddim_sample(
    denoiser: Denoiser,
    condition: Any,
    action: Any,
    substeps: Sequence[int],
    schedule: NoiseSchedule,
    seed: int,
    shape: Tuple[int, ...],
    clip_sample: float = 3.0,
) -> np.ndarray:
    """
    Deterministic DDIM sampling from a seeded unit-Gaussian z^K.

    Args:
        denoiser: eps_hat = denoiser(z_k, k, condition, action)
        condition: Passed through to the denoiser
        action: Passed through to the denoiser
        substeps: Strictly increasing steps ending at K_steps
        schedule: Noise schedule
        seed: Seed of the initial noise
        shape: Shape of the sample
        clip_sample: Predicted z0 is clamped to [-clip_sample, clip_sample]

    Returns:
        z^0 sample
    """
    steps = _check_substeps(substeps, schedule)
    z = np.random.default_rng(seed).standard_normal(shape)
    for i in range(len(steps) - 1, -1, -1):
        k = steps[i]
        k_prev = steps[i - 1] if i > 0 else 0
        eps_hat = np.asarray(denoiser(z, k, condition, action), dtype=np.float64)
        z = ddim_step(z, eps_hat, k, k_prev, schedule, clip_sample)
    return z


def ddpm_sample(
    denoiser: Denoiser,
    condition: Any,
    action: Any,
    schedule: NoiseSchedule,
    seed: int,
    shape: Tuple[int, ...],
) -> np.ndarray:
    """Full ancestral chain K -> 0 with the fixed sigma schedule."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(shape)
    for k in range(schedule.k_steps, 0, -1):
        eps_hat = np.asarray(denoiser(z, k, condition, action), dtype=np.float64)
        noise = rng.standard_normal(shape) if k > 1 else np.zeros(shape)
        z = ddpm_step(z, eps_hat, k, schedule, noise)
    return z

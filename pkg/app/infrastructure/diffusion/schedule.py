"""Noise schedule and forward process.

Step indices are 1-based: k = 1 is the least noisy step and k = K_steps the
noisiest. alpha_bar(0) is defined as 1 (clean data).
"""
from dataclasses import dataclass
from typing import Union

import numpy as np

from app.config.schemas import DiffusionConfig
from app.domain.exceptions import ContractViolationError, ScheduleError


StepIndex = Union[int, np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    """beta / alpha / alpha_bar arrays and the fixed posterior noise scales."""

    betas: np.ndarray
    alphas: np.ndarray
    alphas_cumprod: np.ndarray
    alphas_cumprod_prev: np.ndarray
    sigmas: np.ndarray

    @property
    def k_steps(self) -> int:
        return int(self.betas.shape[0])

    def _index(self, k: StepIndex, allow_zero: bool = False):
        k_array = np.asarray(k)
        low = 0 if allow_zero else 1
        if np.any(k_array < low) or np.any(k_array > self.k_steps):
            raise ScheduleError(f"step index {k} outside [{low}, {self.k_steps}]")
        return k_array.astype(np.int64) - 1

    def step_index(self, k: StepIndex):
        """0-based array index of a 1-based step (raises outside [1, K])."""
        return self._index(k)

    def beta(self, k: StepIndex):
        return self.betas[self._index(k)]

    def alpha(self, k: StepIndex):
        return self.alphas[self._index(k)]

    def alpha_bar(self, k: StepIndex):
        """Cumulative product; alpha_bar(0) = 1."""
        index = self._index(k, allow_zero=True)
        return np.where(index < 0, 1.0, self.alphas_cumprod[np.maximum(index, 0)])

    def sigma(self, k: StepIndex):
        return self.sigmas[self._index(k)]


def linear_schedule(k_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """
    Linear beta schedule, endpoints inclusive.

    Raises:
        ScheduleError: If K_steps < 1 or not 0 < beta_start <= beta_end < 1
    """
    if k_steps < 1:
        raise ScheduleError(f"K_steps must be >= 1, got {k_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(f"require 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, k_steps, dtype=np.float64)
    alphas = 1.0 - betas
    alphas_cumprod = np.cumprod(alphas)
    alphas_cumprod_prev = np.concatenate([[1.0], alphas_cumprod[:-1]])
    posterior_variance = betas * (1.0 - alphas_cumprod_prev) / (1.0 - alphas_cumprod)
    return NoiseSchedule(
        betas=betas,
        alphas=alphas,
        alphas_cumprod=alphas_cumprod,
        alphas_cumprod_prev=alphas_cumprod_prev,
        sigmas=np.sqrt(posterior_variance),
    )


def schedule_from_config(config: DiffusionConfig) -> NoiseSchedule:
    return linear_schedule(config.k_steps, config.beta_start, config.beta_end)


def _broadcast(values, ndim: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(z0: np.ndarray, k: StepIndex, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """
    z^k = sqrt(alpha_bar[k]) z0 + sqrt(1 - alpha_bar[k]) eps.

    `k` may be a scalar or one step per leading (batch) element.
    """
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ContractViolationError(f"eps shape {eps.shape} does not match z0 shape {z0.shape}")
    alpha_bar = _broadcast(schedule.alphas_cumprod[schedule.step_index(k)], z0.ndim)
    return (np.sqrt(alpha_bar) * z0 + np.sqrt(1.0 - alpha_bar) * eps).astype(z0.dtype, copy=False)


def predict_z0(z_k: np.ndarray, eps_hat: np.ndarray, k: StepIndex, schedule: NoiseSchedule) -> np.ndarray:
    """Invert q_sample for z0 given a noise estimate."""
    alpha_bar = _broadcast(schedule.alpha_bar(k), np.ndim(z_k))
    return (z_k - np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha_bar)

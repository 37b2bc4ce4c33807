import numpy as np
import pytest

from app.domain.exceptions import ContractViolationError, ScheduleError
from app.infrastructure.diffusion import (
    ddim_sample,
    ddim_substeps,
    ddpm_sample,
    ddpm_step,
    diffusion_loss,
    linear_schedule,
    q_sample,
)
from app.infrastructure.tensor import Tensor


def _oracle_denoiser(target, schedule):
    """Returns the exact noise that separates z_k from `target`."""
    def denoise(z, k, condition, action):
        alpha_bar = float(schedule.alpha_bar(k))
        return (z - np.sqrt(alpha_bar) * target) / np.sqrt(1.0 - alpha_bar)
    return denoise


# schedule

def test_single_step_schedule():
    schedule = linear_schedule(1, 0.5, 0.5)
    assert schedule.k_steps == 1
    assert float(schedule.alpha_bar(1)) == pytest.approx(0.5)
    assert float(schedule.alpha_bar(0)) == 1.0


def test_long_schedule_ends_near_pure_noise():
    schedule = linear_schedule(1000, 1e-4, 0.02)
    assert float(schedule.alpha_bar(1000)) < 1e-4
    assert np.all(np.diff(schedule.alphas_cumprod) < 0)


@pytest.mark.parametrize("k_steps,beta_start,beta_end", [(0, 1e-4, 0.02), (10, 1e-4, 1.0), (10, 0.02, 0.01)])
def test_invalid_schedule_rejected(k_steps, beta_start, beta_end):
    with pytest.raises(ScheduleError):
        linear_schedule(k_steps, beta_start, beta_end)


# forward process

def test_q_sample_without_noise_scales_signal():
    schedule = linear_schedule(10, 1e-4, 0.02)
    z0 = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(q_sample(z0, 4, np.zeros_like(z0), schedule), np.sqrt(schedule.alpha_bar(4)) * z0)


def test_q_sample_marginal_statistics():
    schedule = linear_schedule(100, 1e-4, 0.02)
    n = 20000
    eps = np.random.default_rng(0).standard_normal(n)
    samples = q_sample(np.ones(n), 60, eps, schedule)
    alpha_bar = float(schedule.alpha_bar(60))
    variance = 1.0 - alpha_bar
    assert samples.mean() == pytest.approx(np.sqrt(alpha_bar), abs=3 * np.sqrt(variance / n))
    assert samples.var() == pytest.approx(variance, abs=3 * variance * np.sqrt(2.0 / n))


def test_q_sample_per_element_steps():
    schedule = linear_schedule(10, 1e-4, 0.02)
    z0 = np.ones((2, 3))
    out = q_sample(z0, np.array([1, 10]), np.zeros_like(z0), schedule)
    np.testing.assert_allclose(out[0], np.sqrt(schedule.alpha_bar(1)))
    np.testing.assert_allclose(out[1], np.sqrt(schedule.alpha_bar(10)))


@pytest.mark.parametrize("k", [0, 11])
def test_q_sample_step_out_of_range(k):
    schedule = linear_schedule(10, 1e-4, 0.02)
    with pytest.raises(ScheduleError):
        q_sample(np.zeros(3), k, np.zeros(3), schedule)


def test_q_sample_shape_mismatch():
    with pytest.raises(ContractViolationError):
        q_sample(np.zeros(3), 1, np.zeros(4), linear_schedule(10, 1e-4, 0.02))


# loss

def test_diffusion_loss_values():
    assert diffusion_loss(Tensor(np.zeros((2, 3))), np.zeros((2, 3))).item() == 0.0
    assert diffusion_loss(Tensor(np.zeros((2, 3))), np.ones((2, 3))).item() == pytest.approx(1.0)
    with pytest.raises(ContractViolationError):
        diffusion_loss(Tensor(np.zeros(3)), np.zeros(4))


# reverse process

def test_ddpm_step_inverts_single_step_chain():
    schedule = linear_schedule(1, 0.5, 0.5)
    rng = np.random.default_rng(1)
    z0, eps = rng.standard_normal(5), rng.standard_normal(5)
    z1 = q_sample(z0, 1, eps, schedule)
    np.testing.assert_allclose(ddpm_step(z1, eps, 1, schedule, np.zeros(5)), z0, atol=1e-12)


def test_ddpm_final_step_rejects_noise():
    schedule = linear_schedule(5, 1e-4, 0.02)
    with pytest.raises(ScheduleError):
        ddpm_step(np.zeros(3), np.zeros(3), 1, schedule, np.ones(3))


def test_ddim_with_oracle_denoiser_lands_on_target():
    schedule = linear_schedule(50, 1e-4, 0.02)
    target = np.random.default_rng(2).uniform(-1.0, 1.0, (2, 4))
    sample = ddim_sample(_oracle_denoiser(target, schedule), None, None, list(range(1, 51)), schedule, 0, target.shape)
    np.testing.assert_allclose(sample, target, atol=1e-9)


def test_ddim_with_strided_substeps_lands_on_target():
    schedule = linear_schedule(50, 1e-4, 0.02)
    target = np.random.default_rng(3).uniform(-1.0, 1.0, (3,))
    sample = ddim_sample(_oracle_denoiser(target, schedule), None, None, ddim_substeps(50, 5), schedule, 4, target.shape)
    np.testing.assert_allclose(sample, target, atol=1e-9)


def test_ddpm_with_oracle_denoiser_lands_on_target():
    schedule = linear_schedule(50, 1e-4, 0.02)
    target = np.random.default_rng(4).uniform(-1.0, 1.0, (2, 2))
    sample = ddpm_sample(_oracle_denoiser(target, schedule), None, None, schedule, 5, target.shape)
    np.testing.assert_allclose(sample, target, atol=1e-8)


def test_samplers_are_deterministic_per_seed():
    schedule = linear_schedule(20, 1e-4, 0.02)

    def shrink(z, k, condition, action):
        return 0.1 * z

    first = ddpm_sample(shrink, None, None, schedule, 9, (4,))
    np.testing.assert_array_equal(first, ddpm_sample(shrink, None, None, schedule, 9, (4,)))
    assert not np.array_equal(first, ddpm_sample(shrink, None, None, schedule, 10, (4,)))
    steps = ddim_substeps(20, 4)
    np.testing.assert_array_equal(
        ddim_sample(shrink, None, None, steps, schedule, 9, (4,)),
        ddim_sample(shrink, None, None, steps, schedule, 9, (4,)),
    )


def test_ddim_substeps_shape():
    steps = ddim_substeps(1000, 50)
    assert len(steps) == 50
    assert steps[-1] == 1000
    assert all(b > a for a, b in zip(steps, steps[1:]))
    assert ddim_substeps(10, 20) == list(range(1, 11))


def test_ddim_rejects_empty_or_unordered_substeps():
    schedule = linear_schedule(10, 1e-4, 0.02)
    with pytest.raises(ScheduleError):
        ddim_sample(lambda *args: np.zeros(2), None, None, [], schedule, 0, (2,))
    with pytest.raises(ScheduleError):
        ddim_sample(lambda *args: np.zeros(2), None, None, [5, 3, 10], schedule, 0, (2,))

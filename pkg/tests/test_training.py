import logging

import numpy as np
import pytest

from app.application.services.training_service import LOG_FILE, TrainingService, total_loss
from app.application.use_cases.gradient_check_use_case import GradientCheckUseCase, check_batch, check_model_config
from app.config.schemas import TrainConfig
from app.domain.exceptions import DatasetError
from app.infrastructure.models import WorldModel
from app.infrastructure.tensor import backward
from app.utils.image_io import read_csv

from tests.conftest import tiny_model_config


def _train_config(dataset_dir, out_dir, mode="flowdreamer", steps=2, **overrides):
    values = dict(
        mode=mode,
        steps=steps,
        batch_size=2,
        learning_rate=1e-3,
        seed=3,
        dataset_dir=dataset_dir,
        out_dir=out_dir,
        checkpoint_every=2,
        log_every=1,
        model=tiny_model_config(mode, dtype="float32"),
    )
    values.update(overrides)
    return TrainConfig(**values)


# loss wiring

def test_zero_alpha_total_is_diffusion_loss():
    config = check_model_config("flowdreamer")
    _, components = total_loss(WorldModel(config, seed=0), check_batch(config), 0.0, seed=0)
    assert components.total == pytest.approx(components.diffusion, abs=1e-15)
    assert components.flow is not None


def test_total_is_linear_in_alpha():
    config = check_model_config("septrain")
    model, batch = WorldModel(config, seed=0), check_batch(config)
    _, half = total_loss(model, batch, 0.5, seed=1)
    _, double = total_loss(model, batch, 2.0, seed=1)
    assert half.total == pytest.approx(half.diffusion + 0.5 * half.flow, rel=1e-12)
    assert double.total - half.total == pytest.approx(1.5 * half.flow, rel=1e-9)


def test_vanilla_loss_has_no_flow_term():
    config = check_model_config("vanilla")
    _, components = total_loss(WorldModel(config, seed=0), check_batch(config), 1.0, seed=0)
    assert components.flow is None
    assert components.total == components.diffusion


def test_flow_loss_identical_across_flow_modes():
    batch = check_batch(check_model_config("flowdreamer"))
    _, joint = total_loss(WorldModel(check_model_config("flowdreamer"), seed=0), batch, 1.0, seed=0)
    _, separate = total_loss(WorldModel(check_model_config("septrain"), seed=0), batch, 1.0, seed=0)
    assert joint.flow == separate.flow


def test_diffusion_gradient_reaches_flow_net_only_when_joint():
    batch = check_batch(check_model_config("flowdreamer"))
    for mode, expect_signal in (("flowdreamer", True), ("septrain", False)):
        model = WorldModel(check_model_config(mode), seed=0)
        loss, _ = total_loss(model, batch, 0.0, seed=0)
        leaves = model.flow_net.parameters()
        grads = backward(loss, leaves)
        signal = any(np.any(g != 0) for g in grads)
        assert signal == expect_signal, mode


@pytest.mark.parametrize("mode", ["flowdreamer", "septrain", "vanilla"])
def test_total_loss_gradient_check(mode):
    assert GradientCheckUseCase(seed=0).check_total_loss(mode) < 1e-4


# training runs

def test_single_step_writes_loadable_checkpoint(dataset_dir, tmp_path):
    service = TrainingService()
    result = service.train(_train_config(dataset_dir, tmp_path, steps=1))
    assert result.checkpoint_path.is_file()
    assert result.optimizer.step_count == 1
    restored = service.load_model(result.checkpoint_path)
    for name, value in result.model.state_dict().items():
        np.testing.assert_array_equal(restored.state_dict()[name], value)
    rows = read_csv(tmp_path / LOG_FILE)
    assert [int(row["step"]) for row in rows] == [0]


def test_resumed_run_matches_uninterrupted_run(dataset_dir, tmp_path):
    service = TrainingService()
    straight = service.train(_train_config(dataset_dir, tmp_path / "straight", steps=4))
    first_half = service.train(_train_config(dataset_dir, tmp_path / "half", steps=2))
    resumed = service.train(
        _train_config(dataset_dir, tmp_path / "resumed", steps=4),
        resume_from=first_half.checkpoint_path,
    )
    assert resumed.optimizer.step_count == 4
    for name, value in straight.model.state_dict().items():
        np.testing.assert_array_equal(resumed.model.state_dict()[name], value)


def test_rerun_replaces_training_log(dataset_dir, tmp_path):
    service = TrainingService()
    service.train(_train_config(dataset_dir, tmp_path, steps=2))
    service.train(_train_config(dataset_dir, tmp_path, steps=2))
    assert [int(row["step"]) for row in read_csv(tmp_path / LOG_FILE)] == [0, 1]


def test_resume_drops_log_rows_past_checkpoint(dataset_dir, tmp_path):
    service = TrainingService()
    service.train(_train_config(dataset_dir, tmp_path / "run", steps=4))
    half = service.train(_train_config(dataset_dir, tmp_path / "half", steps=2))
    service.train(_train_config(dataset_dir, tmp_path / "run", steps=4), resume_from=half.checkpoint_path)
    assert [int(row["step"]) for row in read_csv(tmp_path / "run" / LOG_FILE)] == [0, 1, 2, 3]


def test_training_is_deterministic(dataset_dir, tmp_path):
    service = TrainingService()
    first = service.train(_train_config(dataset_dir, tmp_path / "a", mode="vanilla"))
    second = service.train(_train_config(dataset_dir, tmp_path / "b", mode="vanilla"))
    assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()
    assert [row["total"] for row in first.history] == [row["total"] for row in second.history]


def test_vanilla_alpha_warning(dataset_dir, tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        TrainingService().train(_train_config(dataset_dir, tmp_path, mode="vanilla", steps=1, alpha=0.5))
    assert any("ignored in vanilla mode" in record.getMessage() for record in caplog.records)


def test_vanilla_warns_only_for_supplied_alpha(dataset_dir, tmp_path, caplog):
    def warned():
        return any("ignored in vanilla mode" in record.getMessage() for record in caplog.records)

    with caplog.at_level(logging.WARNING):
        TrainingService().train(_train_config(dataset_dir, tmp_path / "default", mode="vanilla", steps=1))
    assert not warned()
    with caplog.at_level(logging.WARNING):
        TrainingService().train(_train_config(dataset_dir, tmp_path / "explicit", mode="vanilla", steps=1, alpha=1.0))
    assert warned()


def test_resolution_mismatch_is_a_dataset_error(dataset_dir, tmp_path):
    config = _train_config(dataset_dir, tmp_path, model=check_model_config("flowdreamer"))
    with pytest.raises(DatasetError):
        TrainingService().train(config)


def test_train_mode_must_match_model():
    with pytest.raises(ValueError):
        TrainConfig(mode="vanilla", model=check_model_config("flowdreamer"))

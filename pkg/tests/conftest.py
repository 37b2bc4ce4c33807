"""Shared fixtures: tiny environments, gradient-check-sized models and a generated dataset."""
from pathlib import Path

import numpy as np
import pytest

from app.application.services.dataset_service import DatasetGenerationService
from app.application.use_cases.gradient_check_use_case import check_model_config
from app.config.schemas import EnvConfig, ModelConfig
from app.config.settings import Config
from app.domain.entities.geometry import RgbdFrame
from app.infrastructure.di.service_container import ServiceContainer


@pytest.fixture(autouse=True)
def quiet_runtime(monkeypatch):
    """No progress bars, one worker, a fresh container per test."""
    monkeypatch.setattr(Config, "SHOW_PROGRESS", False)
    monkeypatch.setattr(Config, "NUM_WORKERS", 1)
    ServiceContainer.reset()
    yield
    ServiceContainer.reset()


def tiny_env_config(**overrides) -> EnvConfig:
    """16x16 top-down camera that still sees the whole workspace."""
    values = dict(height=16, width=16, fx=20.0, fy=20.0, cx=8.0, cy=8.0, n_blocks=1)
    values.update(overrides)
    return EnvConfig(**values)


def tiny_model_config(mode: str = "flowdreamer", dtype: str = "float64", **overrides) -> ModelConfig:
    """Gradient-check architecture at the 16x16 dataset resolution."""
    values = check_model_config(mode).model_dump()
    values.update(height=16, width=16, attention_resolutions=(8,), dtype=dtype)
    values.update(overrides)
    return ModelConfig.model_validate(values)


def random_frame(height: int = 8, width: int = 8, seed: int = 0, depth_range=(0.8, 1.0)) -> RgbdFrame:
    rng = np.random.default_rng(seed)
    return RgbdFrame(
        rgb=rng.uniform(0.0, 1.0, (height, width, 3)),
        depth=rng.uniform(depth_range[0], depth_range[1], (height, width)),
    )


@pytest.fixture
def env_config() -> EnvConfig:
    return tiny_env_config()


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """Three 3-step episodes: two train, one test."""
    ServiceContainer.reset()
    out = tmp_path_factory.mktemp("dataset")
    DatasetGenerationService(num_workers=1).generate(tiny_env_config(), episodes=3, steps=3, out_dir=out, seed=0)
    return out

"""Configuration module."""
from app.config.settings import Config, get_config, DevelopmentConfig, ProductionConfig, TestingConfig
from app.config.schemas import (
    DiffusionConfig,
    EnvConfig,
    ModelConfig,
    PlanConfig,
    SamplerConfig,
    TrainConfig,
    MODES,
)

__all__ = [
    "Config",
    "get_config",
    "DevelopmentConfig",
    "ProductionConfig",
    "TestingConfig",
    "DiffusionConfig",
    "EnvConfig",
    "ModelConfig",
    "PlanConfig",
    "SamplerConfig",
    "TrainConfig",
    "MODES",
]

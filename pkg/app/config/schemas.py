"""Experiment configuration schemas (pydantic models).

These are the typed, validated parameter sets passed between layers. They
are frozen so a config can be hashed once and trusted afterwards.
"""
import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.domain.entities.geometry import CameraIntrinsics


Mode = Literal["flowdreamer", "vanilla", "septrain"]
MODES: Tuple[str, ...] = ("flowdreamer", "vanilla", "septrain")


class _FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def canonical_json(self) -> str:
        """Key-sorted compact JSON used for hashing and file headers."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> bytes:
        """SHA-256 digest of the canonical JSON."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).digest()


class EnvConfig(_FrozenModel):
    """Push-world environment parameters (desk-scale defaults)."""

    height: int = Field(32, ge=16)
    width: int = Field(32, ge=16)
    fx: float = Field(40.0, gt=0)
    fy: float = Field(40.0, gt=0)
    cx: float = 16.0
    cy: float = 16.0
    camera_height: float = Field(1.0, gt=0)
    n_blocks: int = Field(2, ge=0)
    a_max: float = Field(0.05, gt=0)
    seed: int = 0
    workspace_half_extent: float = Field(0.3, gt=0)
    block_half_extent: float = Field(0.1, gt=0)
    block_height: float = Field(0.06, gt=0)
    ee_radius: float = Field(0.04, gt=0)
    ee_height: float = Field(0.1, gt=0)
    rotation: bool = False
    random_action_prob: float = Field(0.3, ge=0, le=1)
    policy_noise: float = Field(0.002, ge=0)

    @model_validator(mode="after")
    def _camera_above_objects(self) -> "EnvConfig":
        tallest = max(self.block_height, self.ee_height)
        if self.camera_height <= tallest:
            raise ValueError(
                f"camera_height {self.camera_height} must exceed the tallest object ({tallest})"
            )
        return self

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)

    @property
    def action_dim(self) -> int:
        return 2


class DiffusionConfig(_FrozenModel):
    """Linear beta schedule parameters."""

    k_steps: int = Field(1000, ge=1)
    beta_start: float = 1e-4
    beta_end: float = 0.02

    @model_validator(mode="after")
    def _check_range(self) -> "DiffusionConfig":
        if not (0 < self.beta_start <= self.beta_end < 1):
            raise ValueError("require 0 < beta_start <= beta_end < 1")
        return self


class ModelConfig(_FrozenModel):
    """Architecture of both stages. Sizes are CPU-friendly defaults."""

    height: int = 32
    width: int = 32
    base_channels: int = Field(32, ge=1)
    channel_multipliers: Tuple[int, ...] = (1, 2, 4)
    attention_resolutions: Tuple[int, ...] = (8,)
    num_res_blocks: int = Field(2, ge=1)
    action_dim: int = Field(2, ge=1)
    action_embed_dim: int = Field(64, ge=1)
    action_tokens: int = Field(4, ge=1)
    time_embed_dim: int = Field(128, ge=2)
    cond_downsample_channels: int = Field(16, ge=1)
    norm_groups: int = Field(8, ge=1)
    flow_scale: float = Field(0.05, gt=0)
    action_scale: float = Field(0.05, gt=0)
    depth_min: float = Field(0.8, gt=0)
    depth_max: float = Field(1.0, gt=0)
    mode: Mode = "flowdreamer"
    action_conditioning: Literal["cross_attention", "film"] = "cross_attention"
    dtype: Literal["float32", "float64"] = "float32"
    diffusion: DiffusionConfig = DiffusionConfig()

    @model_validator(mode="after")
    def _check_extents(self) -> "ModelConfig":
        if not self.channel_multipliers:
            raise ValueError("channel_multipliers must not be empty")
        factor = 2 ** (len(self.channel_multipliers) - 1)
        if self.height % factor or self.width % factor:
            raise ValueError(
                f"H, W ({self.height}, {self.width}) must be divisible by {factor}"
            )
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")
        if self.depth_max <= self.depth_min:
            raise ValueError(f"depth_max {self.depth_max} must exceed depth_min {self.depth_min}")
        return self

    @property
    def level_resolutions(self) -> Tuple[int, ...]:
        return tuple(self.height // (2 ** i) for i in range(len(self.channel_multipliers)))


class SamplerConfig(_FrozenModel):
    """Reverse-process settings used at inference."""

    sampler: Literal["ddim", "ddpm"] = "ddim"
    ddim_steps: int = Field(20, ge=1)
    clip_sample: float = Field(3.0, gt=0)


class TrainConfig(_FrozenModel):
    """Joint training parameters (desk-scale defaults)."""

    mode: Mode = "flowdreamer"
    alpha: float = Field(1.0, ge=0)
    steps: int = Field(5000, ge=1)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(1e-4, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    seed: int = 0
    dataset_dir: Path = Path("data")
    out_dir: Path = Path("runs/train")
    checkpoint_every: int = Field(1000, ge=1)
    log_every: int = Field(100, ge=1)
    model: ModelConfig = ModelConfig()

    @field_validator("alpha")
    @classmethod
    def _alpha_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("alpha must be finite")
        return value

    @model_validator(mode="after")
    def _mode_consistent(self) -> "TrainConfig":
        if self.model.mode != self.mode:
            raise ValueError(f"model.mode {self.model.mode!r} does not match mode {self.mode!r}")
        return self


class PlanConfig(_FrozenModel):
    """CEM / MPC parameters."""

    horizon: int = Field(5, ge=1)
    population: int = Field(64, ge=1)
    elites: int = Field(8, ge=1)
    iterations: int = Field(4, ge=1)
    action_low: Tuple[float, ...] = (-0.05, -0.05)
    action_high: Tuple[float, ...] = (0.05, 0.05)
    replan_every: int = Field(1, ge=1)
    success_threshold: float = Field(0.05, gt=0)
    std_floor: float = Field(1e-3, gt=0)
    cost_aggregation: Literal["final", "summed"] = "final"
    max_steps: int = Field(30, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "PlanConfig":
        if self.elites > self.population:
            raise ValueError("elites must not exceed population")
        if self.replan_every > self.horizon:
            raise ValueError("replan_every must not exceed horizon")
        if len(self.action_low) != len(self.action_high):
            raise ValueError("action bounds must have equal length")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("every action_low must be below action_high")
        return self

    @property
    def action_dim(self) -> int:
        return len(self.action_low)


def load_model_config(payload: Optional[str]) -> ModelConfig:
    """Rebuild a ModelConfig from its canonical JSON (None gives defaults)."""
    if not payload:
        return ModelConfig()
    return ModelConfig.model_validate_json(payload)

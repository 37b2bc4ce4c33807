"""Episode and evaluation record entities."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.domain.entities.geometry import Pose, RgbdFrame, SceneFlowField
from app.domain.entities.world import Action


SPLITS = ("train", "val", "test")


@dataclass
class Trajectory:
    """One episode: T actions, T+1 frames, T flows, per-frame pose maps."""

    frames: List[RgbdFrame]
    actions: List[Action]
    poses: List[Dict[int, Pose]]
    flows: List[SceneFlowField]
    object_ids: List[np.ndarray] = field(default_factory=list)
    split: str = "train"
    episode_id: int = 0

    def __post_init__(self):
        """Validate bookkeeping."""
        if len(self.frames) != len(self.actions) + 1 or len(self.frames) != len(self.flows) + 1:
            raise ValueError(
                f"len(frames)={len(self.frames)} must equal len(actions)+1={len(self.actions) + 1} "
                f"and len(flows)+1={len(self.flows) + 1}"
            )
        if len(self.poses) != len(self.frames):
            raise ValueError("one pose map per frame is required")
        if self.object_ids and len(self.object_ids) != len(self.frames):
            raise ValueError("one object-id map per frame is required")
        if self.split not in SPLITS:
            raise ValueError(f"Invalid split: {self.split}")

    @property
    def steps(self) -> int:
        return len(self.actions)


@dataclass
class MetricsRow:
    """Per-frame evaluation metrics for one trajectory."""

    trajectory_id: str
    frame_index: int
    psnr: float
    ssim: float
    flow_epe: Optional[float] = None
    flow_mse: Optional[float] = None
    psnr_moved: Optional[float] = None
    model: str = "model"
    seed: int = 0

    def __post_init__(self):
        """Validate metric ranges."""
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"SSIM out of range: {self.ssim}")
        if self.psnr > 99.0:
            raise ValueError(f"PSNR must be capped at 99 dB, got {self.psnr}")


@dataclass
class SampleBatch:
    """Frame pairs (t, t+1) with actions and ground-truth flow, stacked on axis 0."""

    rgb_t: np.ndarray
    depth_t: np.ndarray
    actions: np.ndarray
    rgb_t1: np.ndarray
    depth_t1: np.ndarray
    flow: np.ndarray
    sample_ids: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        """Validate batch extents."""
        size = self.rgb_t.shape[0]
        if size == 0:
            raise ValueError("empty batch")
        for name in ("depth_t", "actions", "rgb_t1", "depth_t1", "flow"):
            if getattr(self, name).shape[0] != size:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {size}")

    def __len__(self) -> int:
        return int(self.rgb_t.shape[0])

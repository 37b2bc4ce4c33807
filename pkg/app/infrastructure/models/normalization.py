"""Affine maps between RGB-D frames and the network's [-1, 1] channel space."""
from typing import Tuple

import numpy as np

from app.domain.exceptions import ContractViolationError


MIN_DEPTH = 1e-6


class FrameNormalizer:
    """
    RGB in [0, 1] and depth in [depth_min, depth_max] both map to [-1, 1].

    The network layout is channels-first: [B, 4, H, W] with channels R, G, B, D.
    """

    def __init__(self, depth_min: float, depth_max: float):
        if depth_max <= depth_min:
            raise ContractViolationError(f"depth_max {depth_max} must exceed depth_min {depth_min}")
        self._depth_min = float(depth_min)
        self._depth_max = float(depth_max)

    @property
    def depth_max(self) -> float:
        return self._depth_max

    def normalize_depth(self, depth: np.ndarray) -> np.ndarray:
        span = self._depth_max - self._depth_min
        return 2.0 * (np.asarray(depth, dtype=np.float64) - self._depth_min) / span - 1.0

    def denormalize_depth(self, values: np.ndarray) -> np.ndarray:
        span = self._depth_max - self._depth_min
        return (np.asarray(values, dtype=np.float64) + 1.0) * 0.5 * span + self._depth_min

    def encode(self, rgb: np.ndarray, depth: np.ndarray, dtype=np.float32) -> np.ndarray:
        """[B, H, W, 3] RGB and [B, H, W] depth to [B, 4, H, W]."""
        rgb = np.asarray(rgb, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        if rgb.ndim != 4 or rgb.shape[-1] != 3 or depth.shape != rgb.shape[:3]:
            raise ContractViolationError(f"expected [B, H, W, 3] and [B, H, W], got {rgb.shape}, {depth.shape}")
        channels = np.concatenate([rgb * 2.0 - 1.0, self.normalize_depth(depth)[..., None]], axis=-1)
        return np.ascontiguousarray(channels.transpose(0, 3, 1, 2)).astype(dtype)

    def decode(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """[B, 4, H, W] to clamped RGB [B, H, W, 3] and positive depth [B, H, W]."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 4 or z.shape[1] != 4:
            raise ContractViolationError(f"expected [B, 4, H, W], got {z.shape}")
        rgb = np.clip((z[:, :3].transpose(0, 2, 3, 1) + 1.0) * 0.5, 0.0, 1.0)
        depth = np.clip(self.denormalize_depth(z[:, 3]), MIN_DEPTH, self._depth_max)
        return rgb, depth

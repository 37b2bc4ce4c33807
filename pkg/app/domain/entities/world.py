"""Push-world state entities."""
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from app.domain.entities.geometry import Pose


BACKGROUND_ID = 0
END_EFFECTOR_ID = 1


@dataclass(frozen=True)
class Action:
    """Planar end-effector displacement in meters."""

    dx: float
    dy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "Action":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != 2:
            raise ValueError(f"action must have 2 components, got {values.shape[0]}")
        return cls(float(values[0]), float(values[1]))

    def clipped(self, a_max: float) -> "Action":
        return Action(float(np.clip(self.dx, -a_max, a_max)), float(np.clip(self.dy, -a_max, a_max)))


@dataclass(frozen=True)
class Block:
    """Upright box resting on the table."""

    id: int
    pose: Pose
    half_extents: Tuple[float, float]
    height: float
    color: Tuple[float, float, float]

    def __post_init__(self):
        """Validate block geometry."""
        if self.id <= END_EFFECTOR_ID:
            raise ValueError(f"block id {self.id} collides with reserved ids")
        if min(self.half_extents) <= 0 or self.height <= 0:
            raise ValueError("block half-extents and height must be positive")

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation[:2]

    @property
    def yaw(self) -> float:
        return self.pose.yaw

    def moved_to(self, x: float, y: float, yaw: float) -> "Block":
        return replace(self, pose=Pose.from_xy_yaw(x, y, yaw))


@dataclass(frozen=True)
class WorldState:
    """Complete (Markov) state of the push world."""

    ee_pose: Pose
    ee_radius: float
    ee_height: float
    blocks: Tuple[Block, ...] = field(default_factory=tuple)
    bounds: Tuple[float, float, float, float] = (-0.3, 0.3, -0.3, 0.3)
    step_index: int = 0

    def __post_init__(self):
        """Validate ids and bounds."""
        ids = [block.id for block in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"block ids must be unique, got {ids}")
        x_min, x_max, y_min, y_max = self.bounds
        centers = [self.ee_center] + [block.center for block in self.blocks]
        for c in centers:
            if not (x_min - 1e-9 <= c[0] <= x_max + 1e-9 and y_min - 1e-9 <= c[1] <= y_max + 1e-9):
                raise ValueError(f"object center {c} outside workspace bounds {self.bounds}")

    @property
    def ee_center(self) -> np.ndarray:
        return self.ee_pose.translation[:2]

    def block_by_id(self, block_id: int) -> Block:
        for block in self.blocks:
            if block.id == block_id:
                return block
        raise KeyError(block_id)

    def poses(self) -> dict:
        """World-frame poses keyed by object id (end-effector included)."""
        result = {END_EFFECTOR_ID: self.ee_pose}
        for block in self.blocks:
            result[block.id] = block.pose
        return result

    def with_objects(self, ee_xy: np.ndarray, blocks: List[Block], step_index: int) -> "WorldState":
        return replace(
            self,
            ee_pose=Pose.from_xy_yaw(float(ee_xy[0]), float(ee_xy[1])),
            blocks=tuple(blocks),
            step_index=step_index,
        )

"""Camera, pose and frame entities."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels (u = column, v = row, integer pixel centers)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        """Validate intrinsics."""
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform as a 4x4 homogeneous matrix (meters)."""

    matrix: np.ndarray

    def __post_init__(self):
        """Validate the homogeneous transform."""
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
            raise ValueError("pose bottom row must be exactly (0, 0, 0, 1)")
        rotation = m[:3, :3]
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("pose rotation block is not orthonormal")
        if np.linalg.det(rotation) <= 0:
            raise ValueError("pose rotation must have determinant +1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(4))

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float = 0.0, z: float = 0.0) -> "Pose":
        """Planar pose: translation (x, y, z) and rotation yaw about +z."""
        c, s = np.cos(yaw), np.sin(yaw)
        m = np.eye(4)
        m[:2, :2] = [[c, -s], [s, c]]
        m[:3, 3] = [x, y, z]
        return cls(m)

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3].copy()

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.matrix[1, 0], self.matrix[0, 0]))

    def inverse(self) -> "Pose":
        rotation = self.matrix[:3, :3]
        m = np.eye(4)
        m[:3, :3] = rotation.T
        m[:3, 3] = -rotation.T @ self.matrix[:3, 3]
        return Pose(m)

    def compose(self, other: "Pose") -> "Pose":
        """self @ other."""
        return Pose(self.matrix @ other.matrix)


@dataclass
class RgbdFrame:
    """Color in [0, 1] plus metric depth (meters) and a validity mask."""

    rgb: np.ndarray
    depth: np.ndarray
    validity: Optional[np.ndarray] = None

    def __post_init__(self):
        """Validate frame arrays."""
        self.rgb = np.asarray(self.rgb)
        self.depth = np.asarray(self.depth)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError(f"rgb must be HxWx3, got {self.rgb.shape}")
        if self.depth.shape != self.rgb.shape[:2]:
            raise ValueError(f"depth shape {self.depth.shape} does not match rgb {self.rgb.shape[:2]}")
        if self.validity is None:
            self.validity = np.ones(self.depth.shape, dtype=bool)
        self.validity = np.asarray(self.validity, dtype=bool)
        if self.validity.shape != self.depth.shape:
            raise ValueError("validity mask shape does not match depth")
        if np.any(self.depth[self.validity] <= 0):
            raise ValueError("depth must be positive wherever validity is true")

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    def copy(self) -> "RgbdFrame":
        return RgbdFrame(self.rgb.copy(), self.depth.copy(), self.validity.copy())


@dataclass
class SceneFlowField:
    """Per-pixel 3D displacement (camera frame, meters) and occlusion mask."""

    flow: np.ndarray
    occlusion: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        """Validate flow arrays."""
        self.flow = np.asarray(self.flow)
        if self.flow.ndim != 3 or self.flow.shape[2] != 3:
            raise ValueError(f"flow must be HxWx3, got {self.flow.shape}")
        if not np.all(np.isfinite(self.flow)):
            raise ValueError("flow must be finite everywhere")
        if self.occlusion is None:
            self.occlusion = np.zeros(self.flow.shape[:2], dtype=bool)
        self.occlusion = np.asarray(self.occlusion, dtype=bool)
        if self.occlusion.shape != self.flow.shape[:2]:
            raise ValueError("occlusion mask shape does not match flow")

    @classmethod
    def zeros(cls, height: int, width: int) -> "SceneFlowField":
        return cls(np.zeros((height, width, 3)))

    def reversed(self) -> "SceneFlowField":
        """Flow with every displacement negated (occlusion kept)."""
        return SceneFlowField(-self.flow, self.occlusion.copy())

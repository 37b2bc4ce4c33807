"""Pinhole camera math (integer pixel centers, u = column, v = row)."""
from typing import Optional, Tuple

import numpy as np

from app.domain.entities.geometry import CameraIntrinsics
from app.domain.exceptions import BehindCameraError, InvalidDepthError


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """(u, v) coordinate maps of shape H x W."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return u, v


def ray_directions(intrinsics: CameraIntrinsics, height: int, width: int) -> np.ndarray:
    """Per-pixel ray K^-1 [u, v, 1], H x W x 3 with z component 1."""
    u, v = pixel_grid(height, width)
    return np.stack(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)],
        axis=-1,
    )


def unproject(depth: np.ndarray, intrinsics: CameraIntrinsics, validity: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Lift a depth map to camera-frame points D(u, v) * K^-1 [u, v, 1].

    Args:
        depth: H x W metric depth
        intrinsics: Camera intrinsics
        validity: Pixels whose depth must be positive (all pixels when None)

    Returns:
        H x W x 3 points in meters

    Raises:
        InvalidDepthError: If a valid pixel has non-positive or non-finite depth
    """
    depth = np.asarray(depth, dtype=np.float64)
    mask = np.ones(depth.shape, dtype=bool) if validity is None else np.asarray(validity, dtype=bool)
    bad = mask & ~(np.isfinite(depth) & (depth > 0))
    if np.any(bad):
        v, u = np.argwhere(bad)[0]
        raise InvalidDepthError(f"non-positive depth {depth[v, u]} at valid pixel (u={u}, v={v})")
    return ray_directions(intrinsics, *depth.shape) * depth[..., None]


def project(points: np.ndarray, intrinsics: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Project camera-frame points to (u, v, depth).

    Raises:
        BehindCameraError: If any point has z <= 0
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"cannot project {int(np.sum(z <= 0))} point(s) with z <= 0")
    u = intrinsics.fx * points[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * points[..., 1] / z + intrinsics.cy
    return u, v, z

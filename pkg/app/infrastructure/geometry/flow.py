"""Scene flow from rigid transforms, forward warping and visualization."""
import logging
from typing import Mapping, Tuple

import numpy as np

from app.domain.entities.geometry import CameraIntrinsics, Pose, RgbdFrame, SceneFlowField
from app.domain.entities.world import BACKGROUND_ID
from app.domain.exceptions import GeometryError
from app.infrastructure.geometry.camera import unproject


logger = logging.getLogger(__name__)


def flow_from_poses(
    points_t: np.ndarray,
    object_ids: np.ndarray,
    poses_t: Mapping[int, Pose],
    poses_t1: Mapping[int, Pose],
) -> SceneFlowField:
    """
    Rigid scene flow: x_{t+1} = T_{t+1} T_t^-1 x_t for every pixel owned by an object.

    Poses and points share one frame (the static camera frame here).
    Background pixels and objects whose pose did not change get exactly zero flow.

    Raises:
        GeometryError: If a referenced object id has no pose at t or t+1
    """
    points_t = np.asarray(points_t, dtype=np.float64)
    object_ids = np.asarray(object_ids)
    flow = np.zeros(points_t.shape, dtype=np.float64)
    for object_id in np.unique(object_ids):
        object_id = int(object_id)
        if object_id == BACKGROUND_ID:
            continue
        if object_id not in poses_t or object_id not in poses_t1:
            raise GeometryError(f"missing pose for object id {object_id}")
        before, after = poses_t[object_id].matrix, poses_t1[object_id].matrix
        if np.array_equal(before, after):
            continue
        transform = after @ poses_t[object_id].inverse().matrix
        mask = object_ids == object_id
        points = points_t[mask]
        flow[mask] = points @ transform[:3, :3].T + transform[:3, 3] - points
    return SceneFlowField(flow)


def warp_by_flow(
    frame: RgbdFrame,
    flow: SceneFlowField,
    intrinsics: CameraIntrinsics,
) -> Tuple[RgbdFrame, np.ndarray]:
    """
    Forward-splat a frame along its scene flow.

    Each valid, non-occluded pixel is unprojected, displaced, reprojected and
    written to the nearest target pixel. Collisions keep the nearest depth;
    ties go to the lower row-major source index. Reprojections outside the
    frame or behind the camera are dropped.

    Returns:
        (warped frame whose validity is the coverage mask, coverage mask)
    """
    height, width = frame.height, frame.width
    source_mask = frame.validity & ~flow.occlusion
    safe_depth = np.where(frame.validity, frame.depth, 1.0)
    moved = (unproject(safe_depth, intrinsics) + flow.flow).reshape(-1, 3)

    sources = np.flatnonzero(source_mask.ravel())
    points = moved[sources]
    in_front = points[:, 2] > 0
    sources, points = sources[in_front], points[in_front]
    u = np.rint(intrinsics.fx * points[:, 0] / points[:, 2] + intrinsics.cx).astype(np.int64)
    v = np.rint(intrinsics.fy * points[:, 1] / points[:, 2] + intrinsics.cy).astype(np.int64)
    inside = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    sources, points, u, v = sources[inside], points[inside], u[inside], v[inside]

    targets = v * width + u
    depths = points[:, 2]
    order = np.lexsort((sources, depths, targets))
    sorted_targets = targets[order]
    first = np.ones(order.shape[0], dtype=bool)
    first[1:] = sorted_targets[1:] != sorted_targets[:-1]
    winners = order[first]

    rgb = np.zeros((height * width, 3), dtype=np.float64)
    depth = np.zeros(height * width, dtype=np.float64)
    coverage = np.zeros(height * width, dtype=bool)
    rgb[targets[winners]] = frame.rgb.reshape(-1, 3)[sources[winners]]
    depth[targets[winners]] = depths[winners]
    coverage[targets[winners]] = True
    coverage = coverage.reshape(height, width)
    warped = RgbdFrame(rgb.reshape(height, width, 3), depth.reshape(height, width), coverage)
    return warped, coverage


def flow_to_rgb(flow: SceneFlowField) -> np.ndarray:
    """Map each flow component to 0.5 + 0.5 * f / m, m the largest absolute component."""
    values = np.asarray(flow.flow, dtype=np.float64)
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if peak == 0.0:
        return np.full(values.shape, 0.5)
    return np.clip(0.5 + 0.5 * values / peak, 0.0, 1.0)

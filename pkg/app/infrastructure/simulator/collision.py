"""Planar contact geometry: disc vs oriented box and box vs box (SAT)."""
from typing import Optional, Tuple

import numpy as np


Contact = Tuple[float, np.ndarray]


def _rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s], [s, c]])


def box_extents(half_extents: Tuple[float, float], yaw: float) -> np.ndarray:
    """Half extents of the axis-aligned bounding box of a yawed box."""
    hx, hy = half_extents
    c, s = abs(np.cos(yaw)), abs(np.sin(yaw))
    return np.array([hx * c + hy * s, hx * s + hy * c])


def circle_box_contact(
    center: np.ndarray,
    radius: float,
    box_center: np.ndarray,
    half_extents: Tuple[float, float],
    yaw: float,
) -> Optional[Tuple[float, np.ndarray, np.ndarray]]:
    """
    Penetration of a disc into an oriented box.

    Returns:
        (depth, unit normal pointing from box to disc, contact point) or None
    """
    rotation = _rotation(yaw)
    local = rotation.T @ (np.asarray(center, dtype=np.float64) - box_center)
    half = np.asarray(half_extents, dtype=np.float64)
    closest = np.clip(local, -half, half)
    offset = local - closest
    distance = float(np.hypot(offset[0], offset[1]))
    if distance > 0.0:
        if distance >= radius:
            return None
        normal_local = offset / distance
        depth = radius - distance
    else:
        gaps = half - np.abs(local)
        axis = int(np.argmin(gaps))
        normal_local = np.zeros(2)
        normal_local[axis] = 1.0 if local[axis] >= 0 else -1.0
        closest = local.copy()
        closest[axis] = normal_local[axis] * half[axis]
        depth = float(gaps[axis]) + radius
    return depth, rotation @ normal_local, box_center + rotation @ closest


def box_box_contact(
    center_a: np.ndarray,
    half_a: Tuple[float, float],
    yaw_a: float,
    center_b: np.ndarray,
    half_b: Tuple[float, float],
    yaw_b: float,
) -> Optional[Contact]:
    """
    Separating-axis test between two oriented boxes.

    Returns:
        (depth, unit normal pointing from a to b) for the minimum-translation
        axis, or None when the boxes do not overlap
    """
    rot_a, rot_b = _rotation(yaw_a), _rotation(yaw_b)
    axes = (rot_a[:, 0], rot_a[:, 1], rot_b[:, 0], rot_b[:, 1])
    between = np.asarray(center_b, dtype=np.float64) - np.asarray(center_a, dtype=np.float64)
    best_depth, best_normal = np.inf, None
    for axis in axes:
        radius_a = half_a[0] * abs(axis @ rot_a[:, 0]) + half_a[1] * abs(axis @ rot_a[:, 1])
        radius_b = half_b[0] * abs(axis @ rot_b[:, 0]) + half_b[1] * abs(axis @ rot_b[:, 1])
        distance = float(between @ axis)
        overlap = radius_a + radius_b - abs(distance)
        if overlap <= 0.0:
            return None
        if overlap < best_depth:
            best_depth = overlap
            best_normal = axis if distance >= 0 else -axis
    return float(best_depth), best_normal

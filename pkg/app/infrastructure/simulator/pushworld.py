"""Deterministic tabletop pushing world seen by a fixed top-down depth camera.

World frame: table plane z = 0, +x east, +y north. The camera sits at
(0, 0, camera_height) looking straight down; its frame has +x east, +y south
and +z pointing into the table, so pixel depth equals camera-frame z.
"""
import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.config.schemas import EnvConfig
from app.domain.entities.geometry import Pose, RgbdFrame, SceneFlowField
from app.domain.entities.world import Action, Block, WorldState, BACKGROUND_ID, END_EFFECTOR_ID
from app.domain.exceptions import WorkspaceCrowdedError
from app.infrastructure.geometry.camera import ray_directions, unproject
from app.infrastructure.geometry.flow import flow_from_poses
from app.infrastructure.simulator.collision import box_box_contact, box_extents, circle_box_contact


TABLE_COLOR = (0.05, 0.05, 0.06)
END_EFFECTOR_COLOR = (0.75, 0.75, 0.75)
BLOCK_PALETTE = (
    (0.95, 0.85, 0.20),
    (0.20, 0.90, 0.95),
    (0.95, 0.35, 0.85),
    (0.95, 0.55, 0.15),
    (0.60, 0.95, 0.20),
    (0.95, 0.95, 0.95),
)
CONTACT_ITERATIONS = 16
PLACEMENT_ATTEMPTS = 1000
PLACEMENT_MARGIN = 0.01
PENETRATION_TOLERANCE = 1e-9
OCCLUSION_DEPTH_TOLERANCE = 0.02
ROTATION_GAIN = 0.5


def camera_extrinsic(camera_height: float) -> Pose:
    """World-to-camera transform of the top-down camera."""
    return Pose(np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, camera_height],
        [0.0, 0.0, 0.0, 1.0],
    ]))


class PushWorld:
    """
    Quasi-static push simulator.

    The end-effector is a vertical cylinder; blocks are upright boxes. A
    step moves the end-effector in substeps and resolves every penetration
    by minimum-translation vectors, so the state is fully described by poses.
    """

    def __init__(self, config: EnvConfig):
        self._config = config
        self._logger = logging.getLogger(__name__)
        self._intrinsics = config.intrinsics
        rays = ray_directions(self._intrinsics, config.height, config.width)
        # world-frame horizontal ray components per unit of depth
        self._ray_x = rays[..., 0]
        self._ray_y = -rays[..., 1]
        self._extrinsic = camera_extrinsic(config.camera_height)
        half = config.workspace_half_extent
        self._bounds = (-half, half, -half, half)

    @property
    def config(self) -> EnvConfig:
        return self._config

    @property
    def extrinsic(self) -> Pose:
        return self._extrinsic

    # Episode start

    def reset(self, seed: int) -> WorldState:
        """
        Place blocks and the end-effector uniformly at random without overlap.

        Raises:
            WorkspaceCrowdedError: If an object cannot be placed in 1000 attempts
        """
        config = self._config
        rng = np.random.default_rng(seed)
        half_extents = (config.block_half_extent, config.block_half_extent)
        inflated = tuple(h + PLACEMENT_MARGIN / 2 for h in half_extents)
        blocks: List[Block] = []
        for index in range(config.n_blocks):
            block_id = END_EFFECTOR_ID + 1 + index
            for _ in range(PLACEMENT_ATTEMPTS):
                yaw = float(rng.uniform(-math.pi / 4, math.pi / 4)) if config.rotation else 0.0
                limit = config.workspace_half_extent - box_extents(half_extents, yaw)
                if np.any(limit <= 0):
                    continue
                center = rng.uniform(-limit, limit)
                if all(
                    box_box_contact(center, inflated, yaw, other.center, inflated, other.yaw) is None
                    for other in blocks
                ):
                    blocks.append(Block(
                        id=block_id,
                        pose=Pose.from_xy_yaw(float(center[0]), float(center[1]), yaw),
                        half_extents=half_extents,
                        height=config.block_height,
                        color=BLOCK_PALETTE[index % len(BLOCK_PALETTE)],
                    ))
                    break
            else:
                raise WorkspaceCrowdedError(
                    f"could not place block {block_id} of {config.n_blocks} after {PLACEMENT_ATTEMPTS} attempts"
                )

        limit = config.workspace_half_extent - config.ee_radius
        for _ in range(PLACEMENT_ATTEMPTS):
            ee = rng.uniform(-limit, limit, size=2)
            if all(
                circle_box_contact(ee, config.ee_radius + PLACEMENT_MARGIN, b.center, b.half_extents, b.yaw) is None
                for b in blocks
            ):
                break
        else:
            raise WorkspaceCrowdedError(f"no free end-effector location after {PLACEMENT_ATTEMPTS} attempts")

        return WorldState(
            ee_pose=Pose.from_xy_yaw(float(ee[0]), float(ee[1])),
            ee_radius=config.ee_radius,
            ee_height=config.ee_height,
            blocks=tuple(blocks),
            bounds=self._bounds,
            step_index=0,
        )

    # Dynamics

    def step(self, state: WorldState, action: Action) -> WorldState:
        """Advance one quasi-static step; out-of-range actions are clipped."""
        clipped = action.clipped(self._config.a_max)
        if clipped != action:
            self._logger.debug(f"action {action} clipped to {clipped}")
        delta = clipped.as_array()
        radius = state.ee_radius
        ee = state.ee_center.copy()
        centers = np.array([b.center for b in state.blocks], dtype=np.float64).reshape(-1, 2)
        yaws = np.array([b.yaw for b in state.blocks], dtype=np.float64)
        halves = [b.half_extents for b in state.blocks]
        touched = np.zeros(len(state.blocks), dtype=bool)

        substeps = max(1, math.ceil(float(np.linalg.norm(delta)) / (0.25 * radius)))
        for _ in range(substeps):
            saved = (ee.copy(), centers.copy(), yaws.copy(), touched.copy())
            ee = self._clamp_disc(ee + delta / substeps, radius)
            ee = self._resolve_contacts(ee, radius, centers, yaws, halves, touched)
            if self._max_penetration(ee, radius, centers, yaws, halves) > PENETRATION_TOLERANCE:
                self._logger.debug(f"step {state.step_index}: jammed contact, substep reverted")
                ee, centers, yaws, touched = saved

        blocks = [
            block.moved_to(float(centers[i, 0]), float(centers[i, 1]), float(yaws[i])) if touched[i] else block
            for i, block in enumerate(state.blocks)
        ]
        return state.with_objects(ee, blocks, state.step_index + 1)

    def _resolve_contacts(self, ee, radius, centers, yaws, halves, touched) -> np.ndarray:
        moved_now = np.zeros(len(halves), dtype=bool)
        for _ in range(CONTACT_ITERATIONS):
            active = False
            for i, half in enumerate(halves):
                contact = circle_box_contact(ee, radius, centers[i], half, yaws[i])
                if contact is None or contact[0] <= PENETRATION_TOLERANCE:
                    continue
                depth, normal, point = contact
                push = -normal * depth
                if self._config.rotation:
                    yaws[i] += self._spin(point - centers[i], push, half)
                centers[i] = self._clamp_box(centers[i] + push, half, yaws[i])
                touched[i] = moved_now[i] = active = True
                residual = circle_box_contact(ee, radius, centers[i], half, yaws[i])
                if residual is not None and residual[0] > PENETRATION_TOLERANCE:
                    # the block is pinned against a wall: the end-effector stops at contact
                    ee = self._clamp_disc(ee + residual[1] * residual[0], radius)
            for i in range(len(halves)):
                for j in range(i + 1, len(halves)):
                    contact = box_box_contact(centers[i], halves[i], yaws[i], centers[j], halves[j], yaws[j])
                    if contact is None or contact[0] <= PENETRATION_TOLERANCE:
                        continue
                    depth, normal = contact
                    if moved_now[i] and not moved_now[j]:
                        share_i, share_j = 0.0, 1.0
                    elif moved_now[j] and not moved_now[i]:
                        share_i, share_j = 1.0, 0.0
                    else:
                        share_i = share_j = 0.5
                    centers[i] = self._clamp_box(centers[i] - normal * depth * share_i, halves[i], yaws[i])
                    centers[j] = self._clamp_box(centers[j] + normal * depth * share_j, halves[j], yaws[j])
                    touched[i] = touched[j] = moved_now[i] = moved_now[j] = active = True
            if not active:
                break
        return ee

    def _max_penetration(self, ee, radius, centers, yaws, halves) -> float:
        worst = 0.0
        for i, half in enumerate(halves):
            contact = circle_box_contact(ee, radius, centers[i], half, yaws[i])
            if contact is not None:
                worst = max(worst, contact[0])
            for j in range(i + 1, len(halves)):
                pair = box_box_contact(centers[i], half, yaws[i], centers[j], halves[j], yaws[j])
                if pair is not None:
                    worst = max(worst, pair[0])
        return worst

    @staticmethod
    def _spin(lever: np.ndarray, push: np.ndarray, half) -> float:
        torque = lever[0] * push[1] - lever[1] * push[0]
        return ROTATION_GAIN * torque / (half[0] ** 2 + half[1] ** 2)

    def _clamp_box(self, center: np.ndarray, half, yaw: float) -> np.ndarray:
        x_min, x_max, y_min, y_max = self._bounds
        extent = box_extents(half, yaw)
        return np.array([
            np.clip(center[0], x_min + extent[0], x_max - extent[0]),
            np.clip(center[1], y_min + extent[1], y_max - extent[1]),
        ])

    def _clamp_disc(self, center: np.ndarray, radius: float) -> np.ndarray:
        x_min, x_max, y_min, y_max = self._bounds
        return np.array([
            np.clip(center[0], x_min + radius, x_max - radius),
            np.clip(center[1], y_min + radius, y_max - radius),
        ])

    # Rendering

    def render(self, state: WorldState) -> RgbdFrame:
        return self.render_with_ids(state)[0]

    def render_with_ids(self, state: WorldState) -> Tuple[RgbdFrame, np.ndarray]:
        """Ray-cast the scene; returns the frame and the nearest-hit object-id map."""
        height = self._config.camera_height
        depths = [self._cylinder_depth(state.ee_center, state.ee_radius, state.ee_height)]
        ids = [END_EFFECTOR_ID]
        colors = [END_EFFECTOR_COLOR]
        for block in state.blocks:
            depths.append(self._box_depth(block.center, block.half_extents, block.height, block.yaw))
            ids.append(block.id)
            colors.append(block.color)
        depths.append(np.full(self._ray_x.shape, height))
        ids.append(BACKGROUND_ID)
        colors.append(TABLE_COLOR)

        stacked = np.stack(depths)
        nearest = np.argmin(stacked, axis=0)
        depth = np.take_along_axis(stacked, nearest[None], axis=0)[0]
        id_map = np.asarray(ids, dtype=np.int64)[nearest]
        rgb = np.asarray(colors, dtype=np.float64)[nearest]
        return RgbdFrame(rgb, depth), id_map

    def _box_depth(self, center, half, box_height: float, yaw: float) -> np.ndarray:
        """Slab test in the box frame; returns camera depth of the first hit (inf on miss)."""
        height = self._config.camera_height
        c, s = math.cos(yaw), math.sin(yaw)
        dir_x = c * self._ray_x + s * self._ray_y
        dir_y = -s * self._ray_x + c * self._ray_y
        origin_x = -(c * center[0] + s * center[1])
        origin_y = -(-s * center[0] + c * center[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            tx0, tx1 = (-half[0] - origin_x) / dir_x, (half[0] - origin_x) / dir_x
            ty0, ty1 = (-half[1] - origin_y) / dir_y, (half[1] - origin_y) / dir_y
        near = np.fmax.reduce([np.fmin(tx0, tx1), np.fmin(ty0, ty1), np.full(dir_x.shape, height - box_height)])
        far = np.fmin.reduce([np.fmax(tx0, tx1), np.fmax(ty0, ty1), np.full(dir_x.shape, height)])
        hit = (near <= far) & (far > 0)
        return np.where(hit, near, np.inf)

    def _cylinder_depth(self, center, radius: float, cylinder_height: float) -> np.ndarray:
        """Top cap first, then the lateral surface between cap and table."""
        height = self._config.camera_height
        top = height - cylinder_height
        cap_x = top * self._ray_x - center[0]
        cap_y = top * self._ray_y - center[1]
        cap = cap_x * cap_x + cap_y * cap_y <= radius * radius

        a = self._ray_x * self._ray_x + self._ray_y * self._ray_y
        b = -2.0 * (self._ray_x * center[0] + self._ray_y * center[1])
        c = center[0] ** 2 + center[1] ** 2 - radius * radius
        disc = b * b - 4.0 * a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a)
        side = (disc >= 0) & (a > 0) & (t_side >= top) & (t_side <= height)
        return np.where(cap, top, np.where(side, t_side, np.inf))

    # Ground truth

    def camera_poses(self, state: WorldState) -> Dict[int, Pose]:
        """Object poses expressed in the camera frame."""
        return {object_id: self._extrinsic.compose(pose) for object_id, pose in state.poses().items()}

    def gt_flow(
        self,
        state_t: WorldState,
        state_t1: WorldState,
        frame_t: Optional[RgbdFrame] = None,
    ) -> SceneFlowField:
        """
        Exact camera-frame scene flow between two states.

        A pixel is occluded when its displaced surface point reprojects outside
        the frame or onto a pixel that, at t+1, shows another object or a
        surface at a different depth.
        """
        rendered_t, ids_t = self.render_with_ids(state_t)
        frame_t = rendered_t if frame_t is None else frame_t
        points = unproject(frame_t.depth, self._intrinsics, frame_t.validity)
        flow = flow_from_poses(points, ids_t, self.camera_poses(state_t), self.camera_poses(state_t1))
        frame_t1, ids_t1 = self.render_with_ids(state_t1)
        occlusion = self._occlusion(points + flow.flow, ids_t, frame_t1.depth, ids_t1)
        return SceneFlowField(flow.flow, occlusion)

    def _occlusion(self, moved: np.ndarray, ids_t: np.ndarray, depth_t1: np.ndarray, ids_t1: np.ndarray) -> np.ndarray:
        k = self._intrinsics
        rows, cols = ids_t.shape
        z = moved[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.rint(k.fx * moved[..., 0] / z + k.cx)
            v = np.rint(k.fy * moved[..., 1] / z + k.cy)
        inside = (z > 0) & (u >= 0) & (u < cols) & (v >= 0) & (v < rows)
        ui = np.where(inside, u, 0).astype(np.int64)
        vi = np.where(inside, v, 0).astype(np.int64)
        visible = (ids_t1[vi, ui] == ids_t) & (np.abs(depth_t1[vi, ui] - z) <= OCCLUSION_DEPTH_TOLERANCE)
        return ~(inside & visible)


@lru_cache(maxsize=8)
def get_world(config: EnvConfig) -> PushWorld:
    """Shared simulator instance per (immutable) config."""
    return PushWorld(config)


def reset(config: EnvConfig, seed: int) -> WorldState:
    return get_world(config).reset(seed)


def step(state: WorldState, action: Action, config: EnvConfig) -> WorldState:
    return get_world(config).step(state, action)


def render(state: WorldState, config: EnvConfig) -> RgbdFrame:
    return get_world(config).render(state)


def gt_flow(state_t: WorldState, state_t1: WorldState, frame_t: Optional[RgbdFrame], config: EnvConfig) -> SceneFlowField:
    return get_world(config).gt_flow(state_t, state_t1, frame_t)

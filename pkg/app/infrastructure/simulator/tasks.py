"""Seeded single-block pushing tasks for visual MPC."""
import logging
import math
from dataclasses import dataclass

import numpy as np

from app.config.schemas import EnvConfig
from app.domain.entities.geometry import Pose, RgbdFrame
from app.domain.entities.world import Action, WorldState
from app.domain.exceptions import WorkspaceCrowdedError
from app.infrastructure.simulator.collision import box_extents
from app.infrastructure.simulator.pushworld import get_world


logger = logging.getLogger(__name__)

PUSH_DISTANCE_RANGE = (0.20, 0.25)
CONTACT_GAP = 0.005
TASK_ATTEMPTS = 200
_DIRECTIONS = (np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, -1.0]))


@dataclass(frozen=True)
class PushTask:
    """Start state and goal observation of one planning task."""

    seed: int
    start: WorldState
    goal: WorldState
    goal_frame: RgbdFrame
    push_direction: np.ndarray
    push_distance: float


def _rgb_mse(a: RgbdFrame, b: RgbdFrame) -> float:
    diff = a.rgb - b.rgb
    return float(np.mean(diff * diff))


def make_push_task(config: EnvConfig, seed: int, min_start_cost: float = 0.0) -> PushTask:
    """
    Build a 1-block task: the end-effector starts just behind the block, and
    the goal is the observation after a straight scripted push of 0.20 to 0.25 m.

    Tasks whose start observation is already within `min_start_cost` of the
    goal are rejected and resampled.

    Raises:
        WorkspaceCrowdedError: If no valid task is found
    """
    config = config.model_copy(update={"n_blocks": 1})
    world = get_world(config)
    rng = np.random.default_rng(seed)
    for attempt in range(TASK_ATTEMPTS):
        base = world.reset(int(rng.integers(0, 2**31 - 1)))
        block = base.blocks[0]
        direction = _DIRECTIONS[int(rng.integers(0, len(_DIRECTIONS)))]
        distance = float(rng.uniform(*PUSH_DISTANCE_RANGE))

        half = config.workspace_half_extent
        limit = half - box_extents(block.half_extents, block.yaw)
        goal_center = block.center + direction * distance
        if np.any(np.abs(goal_center) > limit):
            continue
        axis = 0 if direction[0] != 0 else 1
        ee_start = block.center - direction * (block.half_extents[axis] + config.ee_radius + CONTACT_GAP)
        if np.any(np.abs(ee_start) > half - config.ee_radius):
            continue
        start = WorldState(
            ee_pose=Pose.from_xy_yaw(float(ee_start[0]), float(ee_start[1])),
            ee_radius=base.ee_radius,
            ee_height=base.ee_height,
            blocks=base.blocks,
            bounds=base.bounds,
            step_index=0,
        )

        state = start
        travel = distance + CONTACT_GAP
        for _ in range(math.ceil(travel / config.a_max - 1e-9)):
            step = min(config.a_max, travel)
            travel -= step
            state = world.step(state, Action.from_array(direction * step))
        goal = WorldState(
            ee_pose=state.ee_pose,
            ee_radius=state.ee_radius,
            ee_height=state.ee_height,
            blocks=state.blocks,
            bounds=state.bounds,
            step_index=0,
        )
        goal_frame = world.render(goal)
        start_cost = _rgb_mse(world.render(start), goal_frame)
        if start_cost <= min_start_cost:
            logger.debug(f"task seed {seed} attempt {attempt}: start cost {start_cost:.4f} too small")
            continue
        return PushTask(seed, start, goal, goal_frame, direction, distance)
    raise WorkspaceCrowdedError(f"no valid push task for seed {seed} after {TASK_ATTEMPTS} attempts")

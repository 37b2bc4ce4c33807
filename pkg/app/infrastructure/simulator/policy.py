"""Scripted pushing policy used for data collection and task generation."""
import logging
from typing import Optional, Tuple

import numpy as np

from app.config.schemas import EnvConfig
from app.domain.entities.world import Action, Block, WorldState


logger = logging.getLogger(__name__)

APPROACH_MARGIN = 0.02
ALIGN_TOLERANCE = 0.01
GOAL_TOLERANCE = 0.005


def _farthest_block(state: WorldState, goal: WorldState) -> Tuple[Optional[Block], Optional[Block], float]:
    best, best_goal, best_distance = None, None, 0.0
    for block in state.blocks:
        try:
            target = goal.block_by_id(block.id)
        except KeyError:
            continue
        distance = float(np.linalg.norm(target.center - block.center))
        if best is None or distance > best_distance:
            best, best_goal, best_distance = block, target, distance
    return best, best_goal, best_distance


def _push_frame(block: Block, offset: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, float, float]:
    """Dominant block axis towards the goal: (direction, lateral axis, half along, half across, distance)."""
    c, s = np.cos(block.yaw), np.sin(block.yaw)
    axes = (np.array([c, s]), np.array([-s, c]))
    components = (float(offset @ axes[0]), float(offset @ axes[1]))
    major = 0 if abs(components[0]) >= abs(components[1]) else 1
    direction = axes[major] * np.sign(components[major])
    lateral = axes[1 - major]
    return (
        direction,
        lateral,
        block.half_extents[major],
        block.half_extents[1 - major],
        abs(components[major]),
    )


def scripted_action(state: WorldState, goal: WorldState, a_max: float) -> np.ndarray:
    """
    Noise-free displacement that walks around the block, lines up behind it
    and pushes it along its dominant axis towards the goal.
    """
    block, target, distance = _farthest_block(state, goal)
    if block is None or distance < GOAL_TOLERANCE:
        return np.zeros(2)
    direction, lateral_axis, half_along, half_across, remaining = _push_frame(block, target.center - block.center)
    radius = state.ee_radius
    relative = state.ee_center - block.center
    along = float(relative @ direction)
    lateral = float(relative @ lateral_axis)
    contact = half_along + radius
    standoff = contact + APPROACH_MARGIN
    corridor = half_across + radius + APPROACH_MARGIN

    if along <= -contact + ALIGN_TOLERANCE and abs(lateral) <= ALIGN_TOLERANCE:
        step = min(a_max, remaining + (-contact - along))
        move = direction * step - lateral_axis * lateral
    elif along <= -standoff + ALIGN_TOLERANCE:
        move = direction * (-standoff - along) - lateral_axis * lateral
    elif abs(lateral) >= corridor - ALIGN_TOLERANCE:
        move = direction * (-standoff - along)
    else:
        side = 1.0 if lateral >= 0 else -1.0
        move = lateral_axis * (side * corridor - lateral)
    return np.clip(move, -a_max, a_max)


def scripted_policy(state: WorldState, goal: WorldState, seed: int, config: EnvConfig) -> Action:
    """
    Scripted push action with seeded exploration noise.

    The noise stream is keyed on (seed, state.step_index), so the action is a
    pure function of its arguments.
    """
    rng = np.random.default_rng([seed, state.step_index])
    move = scripted_action(state, goal, config.a_max)
    noise = rng.normal(0.0, config.policy_noise, size=2)
    return Action.from_array(move + noise).clipped(config.a_max)

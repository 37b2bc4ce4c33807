"""Push-world simulator."""
from app.infrastructure.simulator.pushworld import (
    PushWorld,
    camera_extrinsic,
    get_world,
    gt_flow,
    render,
    reset,
    step,
)
from app.infrastructure.simulator.policy import scripted_action, scripted_policy
from app.infrastructure.simulator.tasks import PushTask, make_push_task
from app.infrastructure.simulator.oracle import SimulatorRollout

__all__ = [
    "PushWorld",
    "camera_extrinsic",
    "get_world",
    "gt_flow",
    "render",
    "reset",
    "step",
    "scripted_action",
    "scripted_policy",
    "PushTask",
    "make_push_task",
    "SimulatorRollout",
]

"""Domain entities - core business objects."""
from app.domain.entities.geometry import CameraIntrinsics, Pose, RgbdFrame, SceneFlowField
from app.domain.entities.world import Action, Block, WorldState, BACKGROUND_ID, END_EFFECTOR_ID
from app.domain.entities.trajectory import MetricsRow, SampleBatch, Trajectory, SPLITS
from app.domain.entities.planning import EpisodeOutcome, GoalSpec

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "RgbdFrame",
    "SceneFlowField",
    "Action",
    "Block",
    "WorldState",
    "BACKGROUND_ID",
    "END_EFFECTOR_ID",
    "MetricsRow",
    "SampleBatch",
    "Trajectory",
    "SPLITS",
    "EpisodeOutcome",
    "GoalSpec",
]

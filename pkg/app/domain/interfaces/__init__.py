"""Domain interfaces following Dependency Inversion Principle."""

from app.domain.interfaces.rollout_model import IRolloutModel
from app.domain.interfaces.dataset_repository import IDatasetRepository
from app.domain.interfaces.checkpoint_repository import CheckpointPayload, ICheckpointRepository

__all__ = [
    "IRolloutModel",
    "IDatasetRepository",
    "ICheckpointRepository",
    "CheckpointPayload",
]

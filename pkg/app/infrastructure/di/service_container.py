"""Service container for dependency injection (IoC Container Pattern)."""
import logging
from typing import Optional

from app.application.services.dataset_service import DatasetGenerationService
from app.application.services.evaluation_service import EvaluationService
from app.application.services.training_service import TrainingService
from app.config.schemas import SamplerConfig
from app.domain.interfaces.checkpoint_repository import ICheckpointRepository
from app.infrastructure.factories.rollout_factory import RolloutFactory
from app.infrastructure.models.world_model import WorldModel
from app.infrastructure.repositories.episode_repository import EpisodeFileRepository


class ServiceContainer:
    """
    Service container implementing Dependency Injection pattern.

    Follows Singleton pattern; repositories and stateless services are
    created once and shared by every command of the process.
    """

    _instance: Optional['ServiceContainer'] = None
    _episode_repository: Optional[EpisodeFileRepository] = None
    _checkpoint_repository: Optional[ICheckpointRepository] = None
    _dataset_service: Optional[DatasetGenerationService] = None
    _training_service: Optional[TrainingService] = None

    def __new__(cls):
        """Singleton pattern implementation."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._logger = logging.getLogger(__name__)

    def get_episode_repository(self) -> EpisodeFileRepository:
        if self._episode_repository is None:
            ServiceContainer._episode_repository = EpisodeFileRepository()
            self._logger.debug("EpisodeFileRepository created")
        return self._episode_repository

    def get_checkpoint_repository(self) -> ICheckpointRepository:
        if self._checkpoint_repository is None:
            ServiceContainer._checkpoint_repository = RolloutFactory.create_checkpoint_repository()
            self._logger.debug("Checkpoint repository created")
        return self._checkpoint_repository

    def get_dataset_service(self) -> DatasetGenerationService:
        if self._dataset_service is None:
            ServiceContainer._dataset_service = DatasetGenerationService(repository=self.get_episode_repository())
            self._logger.debug("DatasetGenerationService created")
        return self._dataset_service

    def get_training_service(self) -> TrainingService:
        if self._training_service is None:
            ServiceContainer._training_service = TrainingService(
                checkpoints=self.get_checkpoint_repository(),
                episodes=self.get_episode_repository(),
            )
            self._logger.debug("TrainingService created")
        return self._training_service

    def get_evaluation_service(self, model: WorldModel, sampler: SamplerConfig) -> EvaluationService:
        """Evaluation services are bound to one model, so they are not cached."""
        return EvaluationService(model, sampler, repository=self.get_episode_repository())

    @classmethod
    def reset(cls) -> None:
        """Reset all service instances (useful for testing)."""
        cls._instance = None
        cls._episode_repository = None
        cls._checkpoint_repository = None
        cls._dataset_service = None
        cls._training_service = None

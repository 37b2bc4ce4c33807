"""Factory for planner rollout models and repositories (Factory Pattern)."""
import logging
from typing import Optional

from app.config.schemas import EnvConfig, SamplerConfig
from app.domain.interfaces.checkpoint_repository import ICheckpointRepository
from app.domain.interfaces.rollout_model import IRolloutModel
from app.infrastructure.models.rollout import WorldModelRollout
from app.infrastructure.models.world_model import WorldModel
from app.infrastructure.repositories.checkpoint_repository import BinaryCheckpointRepository
from app.infrastructure.simulator.oracle import SimulatorRollout


logger = logging.getLogger(__name__)

POLICIES = ("model", "oracle", "random")


class RolloutFactory:
    """
    Creates the rollout model behind a planning policy.

    "model" imagines with a trained world model, "oracle" with the simulator
    itself; "random" needs no rollout model at all.
    """

    @staticmethod
    def create_rollout_model(
        policy: str,
        env_config: EnvConfig,
        model: Optional[WorldModel] = None,
        sampler: Optional[SamplerConfig] = None,
    ) -> Optional[IRolloutModel]:
        """
        Create a rollout model for a policy.

        Args:
            policy: "model", "oracle" or "random"
            env_config: Environment the oracle simulates
            model: Trained world model (required for "model")
            sampler: Reverse-process settings for the world model

        Returns:
            IRolloutModel instance, or None for the random policy

        Raises:
            ValueError: If the policy is not supported or a model is missing
        """
        policy = policy.lower()
        if policy == "model":
            if model is None:
                raise ValueError("the model policy needs a trained world model")
            return WorldModelRollout(model, sampler or SamplerConfig())
        if policy == "oracle":
            return SimulatorRollout(env_config)
        if policy == "random":
            return None
        raise ValueError(f"Unsupported policy type: {policy}")

    @staticmethod
    def create_checkpoint_repository(storage_type: str = "binary") -> ICheckpointRepository:
        storage_type = storage_type.lower()
        if storage_type == "binary":
            return BinaryCheckpointRepository()
        raise ValueError(f"Unsupported checkpoint storage type: {storage_type}")

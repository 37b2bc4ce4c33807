"""Interface for action-sequence rollout models (Strategy Pattern)."""
from abc import ABC, abstractmethod

import numpy as np

from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.world import WorldState


class IRolloutModel(ABC):
    """
    Interface for anything the planner can imagine the future with.

    Allows switching between the learned world model and the simulator
    itself (oracle) without changing the planner.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Short model tag used in result tables."""
        pass

    @abstractmethod
    def observe(self, state: WorldState, frame: RgbdFrame) -> None:
        """
        Synchronize with the latest real observation.

        Args:
            state: True simulator state (only privileged models may use it)
            frame: Observation rendered from that state
        """
        pass

    @abstractmethod
    def rollout_rgb(self, frame: RgbdFrame, action_sequences: np.ndarray, seed: int) -> np.ndarray:
        """
        Predict the RGB observations produced by candidate action sequences.

        Args:
            frame: Current observation
            action_sequences: Candidates shaped [P, T, action_dim]
            seed: Sampling seed

        Returns:
            Predicted RGB frames shaped [P, T, H, W, 3]
        """
        pass

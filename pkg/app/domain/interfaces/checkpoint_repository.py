"""Interface for checkpoint storage (Repository Pattern)."""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np


@dataclass
class CheckpointPayload:
    """Everything needed to resume training bit-exactly."""

    config_json: str
    step: int
    parameters: Dict[str, np.ndarray] = field(default_factory=dict)
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)


class ICheckpointRepository(ABC):
    """Interface for persisting model parameters and optimizer state."""

    @abstractmethod
    def save(self, payload: CheckpointPayload, path: Path) -> None:
        """
        Write a checkpoint atomically.

        Args:
            payload: Parameters, moments, step and config
            path: Destination file
        """
        pass

    @abstractmethod
    def load(self, path: Path, expected_config_json: str = None) -> CheckpointPayload:
        """
        Read a checkpoint.

        Args:
            path: Checkpoint file
            expected_config_json: When given, the stored config hash must match

        Returns:
            Restored payload
        """
        pass

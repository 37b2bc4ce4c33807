"""Interface for episode storage (Repository Pattern)."""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List

from app.domain.entities.trajectory import Trajectory


class IDatasetRepository(ABC):
    """
    Interface for reading and writing trajectory datasets.

    Allows switching storage formats without changing training or evaluation.
    """

    @abstractmethod
    def write_episode(self, trajectory: Trajectory, path: Path) -> str:
        """
        Encode one trajectory to a file.

        Args:
            trajectory: Episode to store
            path: Destination file

        Returns:
            Hex checksum of the written file
        """
        pass

    @abstractmethod
    def read_episode(self, path: Path, expected_checksum: str = None) -> Trajectory:
        """
        Decode one trajectory.

        Args:
            path: Episode file
            expected_checksum: Verify the file against this checksum when given

        Returns:
            Decoded trajectory
        """
        pass

    @abstractmethod
    def read_manifest(self, dataset_dir: Path) -> Dict[str, Any]:
        """
        Load dataset metadata.

        Args:
            dataset_dir: Dataset root

        Returns:
            Manifest dictionary
        """
        pass

    @abstractmethod
    def episodes_in_split(self, dataset_dir: Path, split: str) -> List[Dict[str, Any]]:
        """
        List manifest entries of one split.

        Args:
            dataset_dir: Dataset root
            split: train, val or test

        Returns:
            Manifest episode entries
        """
        pass

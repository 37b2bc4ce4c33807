"""Repositories for episodes and checkpoints."""
from app.infrastructure.repositories.episode_repository import (
    EpisodeFileRepository,
    file_checksum,
    write_atomic,
)
from app.infrastructure.repositories.sample_stream import FramePairDataset, load_batches
from app.infrastructure.repositories.checkpoint_repository import BinaryCheckpointRepository, moments_of

__all__ = [
    "EpisodeFileRepository",
    "file_checksum",
    "write_atomic",
    "FramePairDataset",
    "load_batches",
    "BinaryCheckpointRepository",
    "moments_of",
]

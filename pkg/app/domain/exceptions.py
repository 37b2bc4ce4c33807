"""Domain exceptions.

All library errors derive from WorldModelError so callers (the CLI, the
error handler) can map them to exit codes without knowing every subtype.
"""
from typing import Optional


class WorldModelError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(WorldModelError, ValueError):
    """Raised when a shape or precondition contract is violated."""


# Geometry

class GeometryError(WorldModelError, ValueError):
    """Base class for camera and flow geometry errors."""


class InvalidDepthError(GeometryError):
    """Non-positive depth at a pixel marked valid."""


class BehindCameraError(GeometryError):
    """A point with z <= 0 cannot be projected."""


class DegenerateSystemError(GeometryError):
    """Least-squares system without a unique solution."""


# Simulation

class SimulationError(WorldModelError):
    """Base class for push-world errors."""


class WorkspaceCrowdedError(SimulationError):
    """Rejection sampling could not place every object."""


# Diffusion

class ScheduleError(WorldModelError, ValueError):
    """Invalid noise schedule parameters or step index."""


# Persistence

class DataError(WorldModelError):
    """Base class for dataset and checkpoint problems (CLI exit code 2)."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message} [{path}]" if path else message)


class DatasetError(DataError):
    """Dataset missing or unusable."""


class DatasetCorruptError(DatasetError):
    """Episode file could not be decoded."""


class ChecksumMismatchError(DatasetError):
    """Episode file does not match the checksum in the manifest."""


class CheckpointError(DataError):
    """Checkpoint missing or unusable."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint file truncated or malformed."""


class CheckpointIncompatibleError(CheckpointError):
    """Checkpoint format version or config hash does not match."""


# Training / planning / evaluation

class TrainingDivergedError(WorldModelError):
    """Gradient norm became non-finite."""


class PlanningError(WorldModelError):
    """CEM produced a non-finite cost."""

    def __init__(self, message: str, candidate: Optional[int] = None):
        self.candidate = candidate
        super().__init__(message)


class EvaluationError(WorldModelError, ValueError):
    """Base class for metric and analysis errors."""


class InsufficientSamplesError(EvaluationError):
    """Too few samples for a statistically meaningful result."""


class DegenerateInputError(EvaluationError):
    """Constant input where variation is required."""


class CliUsageError(WorldModelError):
    """Unknown flag or malformed command line."""

    def __init__(self, message: str, token: Optional[str] = None):
        self.token = token
        super().__init__(message)

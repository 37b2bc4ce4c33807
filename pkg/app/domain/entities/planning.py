"""Visual-MPC entities."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.domain.entities.geometry import RgbdFrame


@dataclass(frozen=True)
class GoalSpec:
    """Goal observation; only its RGB channels enter the cost."""

    goal_frame: RgbdFrame

    @property
    def rgb(self) -> np.ndarray:
        return self.goal_frame.rgb


@dataclass
class EpisodeOutcome:
    """
    Result of one receding-horizon episode.

    `costs[0]` is the cost of the initial observation; each executed action
    appends the cost of the true observation it produced.
    """

    policy: str
    task_seed: int
    seed: int
    success: bool
    costs: List[float] = field(default_factory=list)
    actions: List[np.ndarray] = field(default_factory=list)
    frames: List[RgbdFrame] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def final_cost(self) -> float:
        return self.costs[-1]

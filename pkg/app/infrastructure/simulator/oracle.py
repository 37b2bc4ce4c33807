"""Simulator-backed rollout model (privileged oracle for planning)."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from app.config.schemas import EnvConfig
from app.config.settings import Config
from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.world import Action, WorldState
from app.domain.interfaces.rollout_model import IRolloutModel
from app.infrastructure.simulator.pushworld import get_world


class SimulatorRollout(IRolloutModel):
    """
    Imagines futures by stepping a copy of the true simulator state.

    Candidates are independent, so they are rolled out on up to
    `num_workers` threads; the frames do not depend on the worker count.
    """

    def __init__(self, config: EnvConfig, num_workers: Optional[int] = None):
        self._world = get_world(config)
        self._state: Optional[WorldState] = None
        self.num_workers = num_workers or Config.NUM_WORKERS
        self._logger = logging.getLogger(__name__)

    @property
    def name(self) -> str:
        return "oracle"

    def observe(self, state: WorldState, frame: RgbdFrame) -> None:
        self._state = state

    def _imagine(self, start: WorldState, sequence: np.ndarray) -> np.ndarray:
        frames = []
        state = start
        for action in sequence:
            state = self._world.step(state, Action.from_array(action))
            frames.append(self._world.render(state).rgb)
        return np.stack(frames)

    def rollout_rgb(self, frame: RgbdFrame, action_sequences: np.ndarray, seed: int) -> np.ndarray:
        if self._state is None:
            raise RuntimeError("SimulatorRollout.observe must be called before rollout_rgb")
        sequences = np.asarray(action_sequences, dtype=np.float64)
        start = self._state
        if self.num_workers == 1:
            rollouts = [self._imagine(start, sequence) for sequence in sequences]
        else:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                rollouts = list(pool.map(lambda sequence: self._imagine(start, sequence), sequences))
        return np.stack(rollouts).astype(np.float64)

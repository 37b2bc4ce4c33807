"""Learned world model behind the planner's rollout interface (Adapter Pattern)."""
import logging

import numpy as np

from app.config.schemas import SamplerConfig
from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.world import WorldState
from app.domain.interfaces.rollout_model import IRolloutModel
from app.infrastructure.models.world_model import WorldModel


class WorldModelRollout(IRolloutModel):
    """Imagines futures from pixels only; the true state is never consulted."""

    def __init__(self, model: WorldModel, sampler: SamplerConfig):
        self._model = model
        self._sampler = sampler
        self._logger = logging.getLogger(__name__)

    @property
    def name(self) -> str:
        return self._model.mode

    def observe(self, state: WorldState, frame: RgbdFrame) -> None:
        pass

    def rollout_rgb(self, frame: RgbdFrame, action_sequences: np.ndarray, seed: int) -> np.ndarray:
        return self._model.rollout_batch(frame, action_sequences, self._sampler, seed)

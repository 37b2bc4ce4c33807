"""Frame-pair sample stream with seeded epoch-wise shuffling."""
import logging
import math
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from app.domain.entities.trajectory import SampleBatch, Trajectory
from app.domain.exceptions import DatasetError
from app.infrastructure.repositories.episode_repository import EpisodeFileRepository


logger = logging.getLogger(__name__)


class FramePairDataset:
    """
    All (t, t+1) samples of one split held in memory.

    Batch contents are a pure function of (seed, step), so a resumed run
    sees exactly the batches an uninterrupted run would have seen.
    """

    def __init__(self, trajectories: List[Trajectory], split: str):
        if not trajectories:
            raise DatasetError(f"no trajectories for split {split!r}")
        for trajectory in trajectories:
            if trajectory.split != split:
                raise DatasetError(
                    f"episode {trajectory.episode_id} is tagged {trajectory.split!r}, refusing to use it as {split!r}"
                )
        rgb_t, depth_t, actions, rgb_t1, depth_t1, flow, ids = [], [], [], [], [], [], []
        for trajectory in trajectories:
            for t, action in enumerate(trajectory.actions):
                rgb_t.append(trajectory.frames[t].rgb)
                depth_t.append(trajectory.frames[t].depth)
                actions.append(action.as_array())
                rgb_t1.append(trajectory.frames[t + 1].rgb)
                depth_t1.append(trajectory.frames[t + 1].depth)
                flow.append(trajectory.flows[t].flow)
                ids.append((trajectory.episode_id, t))
        if not ids:
            raise DatasetError(f"split {split!r} contains no transitions")
        self._rgb_t = np.stack(rgb_t)
        self._depth_t = np.stack(depth_t)
        self._actions = np.stack(actions)
        self._rgb_t1 = np.stack(rgb_t1)
        self._depth_t1 = np.stack(depth_t1)
        self._flow = np.stack(flow)
        self._ids = ids
        self._split = split

    @classmethod
    def from_directory(cls, dataset_dir: Path, split: str,
                       repository: Optional[EpisodeFileRepository] = None) -> "FramePairDataset":
        repository = repository or EpisodeFileRepository()
        return cls(repository.load_split(dataset_dir, split), split)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def split(self) -> str:
        return self._split

    def take(self, indices) -> SampleBatch:
        indices = np.asarray(indices, dtype=np.int64)
        return SampleBatch(
            rgb_t=self._rgb_t[indices],
            depth_t=self._depth_t[indices],
            actions=self._actions[indices],
            rgb_t1=self._rgb_t1[indices],
            depth_t1=self._depth_t1[indices],
            flow=self._flow[indices],
            sample_ids=[self._ids[i] for i in indices],
        )

    def batches_per_epoch(self, batch_size: int) -> int:
        return math.ceil(len(self) / batch_size)

    def epoch_order(self, seed: int, epoch: int) -> np.ndarray:
        return np.random.default_rng([int(seed), int(epoch)]).permutation(len(self))

    def batch_at(self, step: int, batch_size: int, seed: int) -> SampleBatch:
        """Batch number `step` of the seeded stream (the last batch of an epoch may be short)."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        per_epoch = self.batches_per_epoch(batch_size)
        epoch, index = divmod(int(step), per_epoch)
        order = self.epoch_order(seed, epoch)
        return self.take(order[index * batch_size:(index + 1) * batch_size])


def load_batches(dataset_dir: Path, split: str, batch_size: int, seed: int) -> Iterator[SampleBatch]:
    """Endless deterministic batch stream over one split."""
    dataset = FramePairDataset.from_directory(dataset_dir, split)
    logger.info(f"Streaming {len(dataset)} {split} samples in batches of {batch_size}")
    step = 0
    while True:
        yield dataset.batch_at(step, batch_size, seed)
        step += 1

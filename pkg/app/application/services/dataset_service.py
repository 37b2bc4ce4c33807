"""Push-world dataset generation (Service Layer Pattern)."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from app.config.schemas import EnvConfig
from app.config.settings import Config
from app.domain.entities.trajectory import Trajectory
from app.domain.entities.world import Action
from app.domain.exceptions import DatasetError
from app.infrastructure.repositories.episode_repository import (
    EPISODE_SUFFIX,
    FORMAT_VERSION,
    MANIFEST_NAME,
    EpisodeFileRepository,
)
from app.infrastructure.simulator.policy import scripted_policy
from app.infrastructure.simulator.pushworld import PushWorld, get_world
from app.middleware.monitoring import track_episode_generated


logger = logging.getLogger(__name__)

HELD_OUT_FRACTION = 0.05


def episode_seed(seed: int, episode: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed), int(episode), int(stream)]).generate_state(1)[0])


def assign_splits(episodes: int, seed: int) -> List[str]:
    """
    Shuffle episodes with the dataset seed; val and test each get round(5%).

    Test receives at least one episode whenever two or more exist; train
    receives the rest.
    """
    order = np.random.default_rng(seed).permutation(episodes)
    n_held = int(round(HELD_OUT_FRACTION * episodes))
    n_test = max(n_held, 1) if episodes >= 2 else 0
    n_val = min(n_held, max(episodes - n_test - 1, 0))
    splits = ["train"] * episodes
    for index in order[:n_test]:
        splits[index] = "test"
    for index in order[n_test:n_test + n_val]:
        splits[index] = "val"
    return splits


@dataclass
class DatasetSummary:
    """What generate_dataset wrote."""

    out_dir: Path
    episodes: int
    samples: int
    split_counts: Dict[str, int] = field(default_factory=dict)
    depth_range: Tuple[float, float] = (0.0, 0.0)


class DatasetGenerationService:
    """
    Collects scripted push trajectories with exact scene flow.

    Episodes are independent (each seeded from (seed, episode)), so the
    worker count never changes the bytes written.
    """

    def __init__(self, repository: Optional[EpisodeFileRepository] = None, num_workers: Optional[int] = None):
        self.repository = repository or EpisodeFileRepository()
        self.num_workers = num_workers or Config.NUM_WORKERS
        self._logger = logging.getLogger(__name__)

    def collect_episode(self, world: PushWorld, steps: int, seed: int, episode: int, split: str) -> Trajectory:
        """Roll the mixed scripted/random policy for `steps` actions."""
        config = world.config
        run_seed = episode_seed(seed, episode)
        state = world.reset(run_seed)
        goal = world.reset(episode_seed(seed, episode, 1))
        explore = np.random.default_rng(episode_seed(seed, episode, 2))

        frame, ids = world.render_with_ids(state)
        frames, object_ids, poses = [frame], [ids], [world.camera_poses(state)]
        actions, flows = [], []
        for _ in range(steps):
            if explore.random() < config.random_action_prob:
                action = Action.from_array(explore.uniform(-config.a_max, config.a_max, size=2))
            else:
                action = scripted_policy(state, goal, run_seed, config)
            next_state = world.step(state, action)
            flows.append(world.gt_flow(state, next_state, frame))
            frame, ids = world.render_with_ids(next_state)
            actions.append(action)
            frames.append(frame)
            object_ids.append(ids)
            poses.append(world.camera_poses(next_state))
            state = next_state
        return Trajectory(
            frames=frames,
            actions=actions,
            poses=poses,
            flows=flows,
            object_ids=object_ids,
            split=split,
            episode_id=episode,
        )

    def generate(self, config: EnvConfig, episodes: int, steps: int, out_dir: Path, seed: int) -> DatasetSummary:
        """
        Write `episodes` episode files and the manifest.

        Args:
            config: Environment parameters
            episodes: Number of episodes
            steps: Actions per episode
            out_dir: Dataset directory
            seed: Dataset seed (episode seeds and split assignment derive from it)

        Returns:
            DatasetSummary

        Raises:
            DatasetError: On I/O failure (files written so far are removed)
        """
        if episodes < 1 or steps < 1:
            raise ValueError(f"episodes and steps must be >= 1, got {episodes}, {steps}")
        out_dir = Path(out_dir)
        world = get_world(config)
        splits = assign_splits(episodes, seed)
        written: List[Path] = []

        def produce(episode: int) -> Tuple[Dict[str, Any], float, float]:
            trajectory = self.collect_episode(world, steps, seed, episode, splits[episode])
            name = f"episode_{episode:05d}{EPISODE_SUFFIX}"
            path = out_dir / name
            written.append(path)
            checksum = self.repository.write_episode(trajectory, path)
            track_episode_generated(trajectory.split)
            depths = np.stack([frame.depth for frame in trajectory.frames])
            entry = {
                "id": episode,
                "file": name,
                "split": trajectory.split,
                "steps": trajectory.steps,
                "checksum": checksum,
            }
            return entry, float(depths.min()), float(depths.max())

        self._logger.info(f"Generating {episodes} episodes x {steps} steps into {out_dir}")
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                results = list(tqdm(
                    pool.map(produce, range(episodes)),
                    total=episodes,
                    desc="gen-data",
                    disable=not Config.SHOW_PROGRESS,
                ))
            depth_min = min(low for _, low, _ in results)
            depth_max = max(high for _, _, high in results)
            manifest = {
                "format_version": FORMAT_VERSION,
                "height": config.height,
                "width": config.width,
                "action_dim": config.action_dim,
                "intrinsics": {"fx": config.fx, "fy": config.fy, "cx": config.cx, "cy": config.cy},
                "depth_min": depth_min,
                "depth_max": depth_max,
                "seed": seed,
                "steps_per_episode": steps,
                "env_config": config.model_dump(mode="json"),
                "episodes": [entry for entry, _, _ in results],
            }
            self.repository.write_manifest(out_dir, manifest)
        except OSError as e:
            self._remove(written + [out_dir / MANIFEST_NAME])
            raise DatasetError(f"dataset generation failed: {e}", str(out_dir)) from e
        except Exception:
            self._remove(written)
            raise

        counts = {split: splits.count(split) for split in ("train", "val", "test")}
        summary = DatasetSummary(
            out_dir=out_dir,
            episodes=episodes,
            samples=episodes * steps,
            split_counts=counts,
            depth_range=(depth_min, depth_max),
        )
        self._logger.info(
            f"Dataset ready: {summary.samples} samples, splits {counts}, depth [{depth_min:.4f}, {depth_max:.4f}]"
        )
        return summary

    def _remove(self, paths: List[Path]) -> None:
        for path in paths:
            try:
                path.unlink(missing_ok=True)
            except OSError as e:
                self._logger.warning(f"Could not remove partial file {path}: {e}")


def generate_dataset(config: EnvConfig, episodes: int, steps: int, out_dir: Path, seed: int) -> DatasetSummary:
    return DatasetGenerationService().generate(config, episodes, steps, out_dir, seed)

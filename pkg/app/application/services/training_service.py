"""Joint two-stage training (Service Layer Pattern).

L_total = L_diff + alpha * L_flow. In flowdreamer mode the denoiser is
conditioned on the predicted flow, so L_diff also trains the flow network;
septrain conditions on ground-truth flow instead; vanilla has no flow at all.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from app.config.schemas import ModelConfig, TrainConfig
from app.config.settings import Config
from app.domain.entities.trajectory import SampleBatch
from app.domain.exceptions import ContractViolationError, DatasetError, TrainingDivergedError
from app.domain.interfaces.checkpoint_repository import CheckpointPayload, ICheckpointRepository
from app.infrastructure.diffusion.sampler import diffusion_loss
from app.infrastructure.diffusion.schedule import q_sample
from app.infrastructure.models.world_model import WorldModel
from app.infrastructure.repositories.checkpoint_repository import BinaryCheckpointRepository, moments_of
from app.infrastructure.repositories.episode_repository import EpisodeFileRepository
from app.infrastructure.repositories.sample_stream import FramePairDataset
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.optim import AdamW
from app.infrastructure.tensor.tensor import Tensor, backward
from app.middleware.monitoring import track_training_step
from app.utils.image_io import append_csv, read_csv, write_csv


logger = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "total", "diffusion", "flow", "grad_norm"]
LOG_FILE = "train_log.csv"
CHECKPOINT_FILE = "model.ckpt"


@dataclass
class LossComponents:
    """Scalar values of one loss evaluation (flow is None in vanilla mode)."""

    total: float
    diffusion: float
    flow: Optional[float] = None


@dataclass
class TrainingResult:
    model: WorldModel
    optimizer: AdamW
    history: List[dict] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None


def noise_draws(seed: int, step: int, batch_size: int, k_steps: int, shape: Tuple[int, ...]):
    """Per-sample diffusion step and noise, derived from (seed, step, sample index)."""
    steps = np.empty(batch_size, dtype=np.int64)
    noise = np.empty((batch_size,) + tuple(shape), dtype=np.float64)
    for i in range(batch_size):
        rng = np.random.default_rng([int(seed), int(step), i])
        steps[i] = rng.integers(1, k_steps + 1)
        noise[i] = rng.standard_normal(shape)
    return steps, noise


def total_loss(
    model: WorldModel,
    batch: SampleBatch,
    alpha: float,
    seed: int,
    step: int = 0,
) -> Tuple[Tensor, LossComponents]:
    """
    Evaluate L_total on one batch.

    Args:
        model: World model (its mode selects the gradient wiring)
        batch: Frame pairs with GT flow
        alpha: Flow-loss weight (ignored in vanilla mode)
        seed: Training seed
        step: Optimizer step (keys the noise draws)

    Returns:
        (differentiable total, scalar components)

    Raises:
        ContractViolationError: If the batch is empty
    """
    if len(batch) == 0:
        raise ContractViolationError("empty batch")
    dtype = np.dtype(model.config.dtype)
    z_t = model.encode(batch.rgb_t, batch.depth_t)
    z0 = model.encode(batch.rgb_t1, batch.depth_t1)
    target_flow = np.ascontiguousarray(batch.flow.transpose(0, 3, 1, 2)).astype(dtype)

    flow_term = None
    if model.mode == "vanilla":
        pack = model.build_condition(z_t, batch.depth_t, None, batch.actions)
    else:
        predicted = model.flow_forward(z_t, batch.actions)
        flow_term = model.flow_loss(predicted, target_flow)
        condition_flow = predicted if model.mode == "flowdreamer" else target_flow
        pack = model.build_condition(z_t, batch.depth_t, condition_flow, batch.actions)

    ks, eps = noise_draws(seed, step, len(batch), model.schedule.k_steps, z0.shape[1:])
    eps = eps.astype(dtype)
    z_k = q_sample(z0, ks, eps, model.schedule)
    diffusion_term = diffusion_loss(model.denoise_eps(z_k, pack, ks), eps)

    total = diffusion_term
    if flow_term is not None:
        total = ops.add(diffusion_term, ops.mul(flow_term, float(alpha)))
    components = LossComponents(
        total=total.item(),
        diffusion=diffusion_term.item(),
        flow=None if flow_term is None else flow_term.item(),
    )
    return total, components


def gradient_norm(model: WorldModel) -> float:
    squares = [float(np.sum(np.square(p.grad, dtype=np.float64))) for p in model.parameters() if p.grad is not None]
    return math.sqrt(sum(squares))


class TrainingService:
    """
    Trains a world model on the train split and writes checkpoints.

    Batches and noise are pure functions of (seed, step), so resuming from a
    checkpoint reproduces an uninterrupted run.
    """

    def __init__(self, checkpoints: Optional[ICheckpointRepository] = None,
                 episodes: Optional[EpisodeFileRepository] = None):
        self.checkpoints = checkpoints or BinaryCheckpointRepository()
        self.episodes = episodes or EpisodeFileRepository()
        self._logger = logging.getLogger(__name__)

    def model_config_for(self, config: TrainConfig) -> ModelConfig:
        """Model config with the dataset's normalization constants."""
        manifest = self.episodes.read_manifest(config.dataset_dir)
        if (manifest["height"], manifest["width"]) != (config.model.height, config.model.width):
            raise DatasetError(
                f"dataset frames are {manifest['height']}x{manifest['width']}, "
                f"model expects {config.model.height}x{config.model.width}",
                str(config.dataset_dir),
            )
        return config.model.model_copy(update={
            "depth_min": float(manifest["depth_min"]),
            "depth_max": float(manifest["depth_max"]),
        })

    def save_checkpoint(self, model: WorldModel, optimizer: AdamW, path: Path) -> None:
        first, second = moments_of(optimizer.states)
        payload = CheckpointPayload(
            config_json=model.config.canonical_json(),
            step=optimizer.step_count,
            parameters=model.state_dict(),
            first_moments=first,
            second_moments=second,
        )
        self.checkpoints.save(payload, path)

    def restore(self, model: WorldModel, optimizer: AdamW, path: Path) -> int:
        """Load parameters and optimizer moments; returns the stored step."""
        payload = self.checkpoints.load(path, expected_config_json=model.config.canonical_json())
        model.load_state_dict(payload.parameters)
        optimizer.step_count = payload.step
        dtype = np.dtype(model.config.dtype)
        for name in payload.first_moments:
            optimizer.load_moments(
                name,
                payload.first_moments[name].astype(dtype),
                payload.second_moments[name].astype(dtype),
                payload.step,
            )
        return payload.step

    def train(self, config: TrainConfig, resume_from: Optional[Path] = None) -> TrainingResult:
        """
        Run (or resume) training up to config.steps optimizer updates.

        Raises:
            DatasetError: Dataset missing, corrupt or without a train split
            TrainingDivergedError: Non-finite gradient norm
        """
        if config.mode == "vanilla" and "alpha" in config.model_fields_set:
            self._logger.warning(f"alpha={config.alpha} is ignored in vanilla mode")
        model_config = self.model_config_for(config)
        dataset = FramePairDataset.from_directory(config.dataset_dir, "train", self.episodes)
        model = WorldModel(model_config, seed=config.seed)
        optimizer = AdamW(learning_rate=config.learning_rate, weight_decay=config.weight_decay)
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / CHECKPOINT_FILE
        log_path = out_dir / LOG_FILE

        start = 0
        if resume_from is not None:
            start = self.restore(model, optimizer, resume_from)
            self._logger.info(f"Resuming {config.mode} training at step {start}")
        self._start_log(log_path, start)
        self._logger.info(
            f"Training {config.mode} ({model.parameter_count()} parameters) on {len(dataset)} samples "
            f"for steps {start}..{config.steps - 1}"
        )

        history: List[dict] = []
        params = list(model.named_parameters())
        for step in tqdm(range(start, config.steps), desc="train", disable=not Config.SHOW_PROGRESS):
            batch = dataset.batch_at(step, config.batch_size, config.seed)
            AdamW.zero_grad(params)
            loss, components = total_loss(model, batch, config.alpha, config.seed, step)
            backward(loss)
            norm = gradient_norm(model)
            if not math.isfinite(norm):
                raise TrainingDivergedError(f"gradient norm became {norm} at step {step}")
            optimizer.step(params)
            track_training_step(config.mode, components.total, components.diffusion, components.flow or 0.0, norm)

            if step % config.log_every == 0 or step == config.steps - 1:
                row = {
                    "step": step,
                    "total": components.total,
                    "diffusion": components.diffusion,
                    "flow": components.flow,
                    "grad_norm": norm,
                }
                history.append(row)
                append_csv(log_path, LOG_COLUMNS, row)
                flow_text = "n/a" if components.flow is None else f"{components.flow:.6f}"
                self._logger.info(
                    f"step {step}: total {components.total:.6f} diff {components.diffusion:.6f} "
                    f"flow {flow_text} |g| {norm:.4f}"
                )
            if (step + 1) % config.checkpoint_every == 0 and step + 1 < config.steps:
                self.save_checkpoint(model, optimizer, checkpoint_path)

        self.save_checkpoint(model, optimizer, checkpoint_path)
        return TrainingResult(model=model, optimizer=optimizer, history=history, checkpoint_path=checkpoint_path)

    def _start_log(self, log_path: Path, start: int) -> None:
        """Keep only log rows before `start`; a fresh run starts an empty log."""
        if not log_path.exists():
            return
        kept = [row for row in read_csv(log_path) if int(row["step"]) < start] if start > 0 else []
        if kept:
            write_csv(log_path, LOG_COLUMNS, kept)
        else:
            log_path.unlink()
        self._logger.debug(f"Training log {log_path} restarted with {len(kept)} earlier rows")

    def load_model(self, path: Path) -> WorldModel:
        """Rebuild a model from a checkpoint (config taken from the file)."""
        payload = self.checkpoints.load(path)
        model = WorldModel(ModelConfig.model_validate_json(payload.config_json))
        model.load_state_dict(payload.parameters)
        return model

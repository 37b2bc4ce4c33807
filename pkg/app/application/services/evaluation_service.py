"""Video-prediction evaluation and flow analyses (Service Layer Pattern)."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config.schemas import SamplerConfig
from app.config.settings import Config
from app.domain.entities.geometry import RgbdFrame, SceneFlowField
from app.domain.entities.trajectory import MetricsRow, Trajectory
from app.domain.exceptions import ContractViolationError, InsufficientSamplesError
from app.infrastructure.geometry.flow import flow_to_rgb
from app.infrastructure.models.world_model import WorldModel, reverse_flow, step_seed
from app.infrastructure.repositories.episode_repository import EpisodeFileRepository
from app.infrastructure.repositories.sample_stream import FramePairDataset
from app.middleware.monitoring import track_rollout
from app.utils.image_io import save_ppm, side_by_side, write_csv, write_metrics_csv
from app.utils.metrics import flow_epe, flow_mse, moved_mask, pearson_r, psnr, ssim


logger = logging.getLogger(__name__)

PERSISTENCE = "persistence"
MIN_CORRELATION_SAMPLES = 10
SUMMARY_COLUMNS = ["model", "metric", "mean", "std", "count"]
ABLATION_COLUMNS = [
    "sample", "psnr_normal", "psnr_reversed", "psnr_delta", "ssim_normal", "ssim_reversed", "ssim_delta",
]
SCATTER_COLUMNS = ["trajectory_id", "frame_index", "flow_epe", "psnr", "ssim"]


def score_frames(
    predicted: Sequence[np.ndarray],
    ground_truth: Sequence[RgbdFrame],
    trajectory_id: str,
    model: str,
    seed: int = 0,
    predicted_flows: Optional[Sequence[SceneFlowField]] = None,
    true_flows: Optional[Sequence[SceneFlowField]] = None,
) -> List[MetricsRow]:
    """
    Per-frame metrics of predicted RGB frames 1..T against the ground truth.

    Moved-region PSNR uses the pixels whose ground-truth color differs from
    frame 0; it is left empty when nothing moved.
    """
    if len(predicted) != len(ground_truth) - 1:
        raise ContractViolationError(f"{len(predicted)} predictions for {len(ground_truth)} ground-truth frames")
    first = ground_truth[0].rgb
    rows = []
    for t, rgb in enumerate(predicted, start=1):
        gt = ground_truth[t].rgb
        mask = moved_mask(gt, first)
        epe = mse = None
        if predicted_flows and true_flows:
            epe = flow_epe(predicted_flows[t - 1].flow, true_flows[t - 1].flow)
            mse = flow_mse(predicted_flows[t - 1].flow, true_flows[t - 1].flow)
        rows.append(MetricsRow(
            trajectory_id=trajectory_id,
            frame_index=t,
            psnr=psnr(rgb, gt),
            ssim=ssim(rgb, gt),
            flow_epe=epe,
            flow_mse=mse,
            psnr_moved=psnr(rgb, gt, mask=mask) if mask.any() else None,
            model=model,
            seed=seed,
        ))
    return rows


def summarize(rows: Sequence[MetricsRow]) -> List[Dict[str, object]]:
    """Mean and standard deviation of each metric per model."""
    summary = []
    for model in sorted({row.model for row in rows}):
        selected = [row for row in rows if row.model == model]
        for metric in ("psnr", "ssim", "psnr_moved", "flow_epe", "flow_mse"):
            values = np.array([getattr(row, metric) for row in selected if getattr(row, metric) is not None])
            if values.size == 0:
                continue
            summary.append({
                "model": model,
                "metric": metric,
                "mean": float(values.mean()),
                "std": float(values.std()),
                "count": int(values.size),
            })
    return summary


@dataclass
class EvaluationReport:
    rows: List[MetricsRow]
    summary: List[Dict[str, object]] = field(default_factory=list)

    def mean(self, model: str, metric: str) -> float:
        for entry in self.summary:
            if entry["model"] == model and entry["metric"] == metric:
                return float(entry["mean"])
        raise KeyError(f"no {metric} summary for model {model}")


@dataclass
class AblationReport:
    """Paired metrics with the predicted flow as-is and negated."""

    psnr_normal: np.ndarray
    psnr_reversed: np.ndarray
    ssim_normal: np.ndarray
    ssim_reversed: np.ndarray

    @property
    def mean_psnr_delta(self) -> float:
        return float(np.mean(self.psnr_normal - self.psnr_reversed))

    @property
    def mean_ssim_delta(self) -> float:
        return float(np.mean(self.ssim_normal - self.ssim_reversed))


class EvaluationService:
    """
    Evaluates a trained world model on the test split.

    Every prediction is seeded from (seed, trajectory, step), so results do
    not depend on the worker count.
    """

    def __init__(self, model: WorldModel, sampler: Optional[SamplerConfig] = None,
                 repository: Optional[EpisodeFileRepository] = None, num_workers: Optional[int] = None):
        self.model = model
        self.sampler = sampler or SamplerConfig()
        self.repository = repository or EpisodeFileRepository()
        self.num_workers = num_workers or Config.NUM_WORKERS
        self._logger = logging.getLogger(__name__)

    def test_trajectories(self, dataset_dir: Path) -> List[Trajectory]:
        return self.repository.load_split(dataset_dir, "test")

    def rollout_rows(self, trajectory: Trajectory, seed: int) -> Tuple[List[MetricsRow], List[RgbdFrame], List[SceneFlowField]]:
        """Roll the model through the recorded actions from the first frame."""
        with track_rollout(self.model.mode):
            frames, flows = self.model.rollout(
                trajectory.frames[0],
                trajectory.actions,
                self.sampler,
                step_seed(seed, trajectory.episode_id),
            )
        rows = score_frames(
            [frame.rgb for frame in frames[1:]],
            trajectory.frames,
            str(trajectory.episode_id),
            self.model.mode,
            seed,
            predicted_flows=flows or None,
            true_flows=trajectory.flows,
        )
        return rows, frames, flows

    def save_panels(self, trajectory: Trajectory, frames: List[RgbdFrame], flows: List[SceneFlowField],
                    seed: int, out_dir: Path) -> None:
        """GT | prediction | predicted flow | GT flow, one PPM per step."""
        for t in range(1, len(frames)):
            true_flow = trajectory.flows[t - 1]
            predicted_flow = flows[t - 1] if flows else SceneFlowField.zeros(*true_flow.flow.shape[:2])
            panel = side_by_side([
                trajectory.frames[t].rgb,
                frames[t].rgb,
                flow_to_rgb(predicted_flow),
                flow_to_rgb(true_flow),
            ])
            save_ppm(panel, out_dir / "panels" / f"ep{trajectory.episode_id:05d}_s{seed}_t{t:02d}.ppm")

    def eval_video_prediction(
        self,
        trajectories: Sequence[Trajectory],
        seeds: Sequence[int] = (0,),
        out_dir: Optional[Path] = None,
        panels: int = 2,
    ) -> EvaluationReport:
        """
        Full-trajectory rollouts from the first frame and recorded actions.

        Args:
            trajectories: Test trajectories
            seeds: Sampling seeds (one rollout per trajectory and seed)
            out_dir: Where metrics.csv, summary.csv and panels go
            panels: Number of trajectories per seed rendered as PPM panels

        Returns:
            EvaluationReport including a persistence-baseline row set
        """
        if not trajectories:
            raise ContractViolationError("no test trajectories to evaluate")
        rows: List[MetricsRow] = []
        for trajectory in trajectories:
            rows.extend(score_frames(
                [trajectory.frames[0].rgb] * trajectory.steps,
                trajectory.frames,
                str(trajectory.episode_id),
                PERSISTENCE,
            ))
        for seed in seeds:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                results = list(pool.map(lambda tr: self.rollout_rows(tr, seed), trajectories))
            for index, (trajectory, (traj_rows, frames, flows)) in enumerate(zip(trajectories, results)):
                rows.extend(traj_rows)
                if out_dir is not None and index < panels:
                    self.save_panels(trajectory, frames, flows, seed, Path(out_dir))

        report = EvaluationReport(rows=rows, summary=summarize(rows))
        for entry in report.summary:
            self._logger.info(
                f"{entry['model']} {entry['metric']}: {entry['mean']:.4f} +- {entry['std']:.4f} (n={entry['count']})"
            )
        if out_dir is not None:
            write_metrics_csv(Path(out_dir) / "metrics.csv", rows)
            write_csv(Path(out_dir) / "summary.csv", SUMMARY_COLUMNS, report.summary)
        return report

    def one_step_rows(self, trajectories: Sequence[Trajectory], seed: int = 0) -> List[MetricsRow]:
        """Next-frame predictions from true frames, one row per sample with flow EPE."""
        if not self.model.uses_flow:
            raise ContractViolationError("one-step flow metrics need a flow-predicting model")
        dataset = FramePairDataset(list(trajectories), "test")
        rows: List[MetricsRow] = []
        for start in range(0, len(dataset), 16):
            batch = dataset.take(np.arange(start, min(start + 16, len(dataset))))
            with track_rollout(self.model.mode):
                prediction = self.model.predict_next_batch(
                    batch.rgb_t, batch.depth_t, batch.actions, self.sampler, step_seed(seed, start)
                )
            for i, (episode, t) in enumerate(batch.sample_ids):
                rows.append(MetricsRow(
                    trajectory_id=str(episode),
                    frame_index=t + 1,
                    psnr=psnr(prediction.rgb[i], batch.rgb_t1[i]),
                    ssim=ssim(prediction.rgb[i], batch.rgb_t1[i]),
                    flow_epe=flow_epe(prediction.flow[i], batch.flow[i]),
                    flow_mse=flow_mse(prediction.flow[i], batch.flow[i]),
                    model=self.model.mode,
                    seed=seed,
                ))
        return rows

    def reverse_flow_ablation(
        self, trajectories: Sequence[Trajectory], seed: int = 0, out_dir: Optional[Path] = None
    ) -> AblationReport:
        """
        Predict every test sample twice, conditioning on f and on -f with the action unchanged.

        Raises:
            ContractViolationError: For the vanilla model (no flow to reverse)
        """
        if not self.model.uses_flow:
            raise ContractViolationError("the vanilla model has no flow to reverse")
        dataset = FramePairDataset(list(trajectories), "test")
        batch = dataset.take(np.arange(len(dataset)))
        scores = {}
        for label, transform in (("normal", None), ("reversed", reverse_flow)):
            prediction = self.model.predict_next_batch(
                batch.rgb_t, batch.depth_t, batch.actions, self.sampler, seed, flow_transform=transform
            )
            scores[label] = (
                np.array([psnr(p, g) for p, g in zip(prediction.rgb, batch.rgb_t1)]),
                np.array([ssim(p, g) for p, g in zip(prediction.rgb, batch.rgb_t1)]),
            )
        report = AblationReport(
            psnr_normal=scores["normal"][0],
            psnr_reversed=scores["reversed"][0],
            ssim_normal=scores["normal"][1],
            ssim_reversed=scores["reversed"][1],
        )
        self._logger.info(
            f"reverse-flow ablation over {len(batch)} samples: PSNR delta {report.mean_psnr_delta:.4f} dB, "
            f"SSIM delta {report.mean_ssim_delta:.4f}"
        )
        if out_dir is not None:
            write_csv(Path(out_dir) / "ablation_reverse.csv", ABLATION_COLUMNS, [
                {
                    "sample": f"{episode}:{t}",
                    "psnr_normal": report.psnr_normal[i],
                    "psnr_reversed": report.psnr_reversed[i],
                    "psnr_delta": report.psnr_normal[i] - report.psnr_reversed[i],
                    "ssim_normal": report.ssim_normal[i],
                    "ssim_reversed": report.ssim_reversed[i],
                    "ssim_delta": report.ssim_normal[i] - report.ssim_reversed[i],
                }
                for i, (episode, t) in enumerate(batch.sample_ids)
            ])
        return report


def correlation_analysis(rows: Sequence[MetricsRow], out_dir: Optional[Path] = None) -> Dict[str, float]:
    """
    Pearson r of flow EPE against PSNR and SSIM.

    Raises:
        InsufficientSamplesError: Fewer than 10 rows carry a flow EPE
    """
    usable = [row for row in rows if row.flow_epe is not None]
    if len(usable) < MIN_CORRELATION_SAMPLES:
        raise InsufficientSamplesError(
            f"correlation needs at least {MIN_CORRELATION_SAMPLES} samples with flow error, got {len(usable)}"
        )
    epe = np.array([row.flow_epe for row in usable])
    result = {
        "psnr": pearson_r(epe, [row.psnr for row in usable]),
        "ssim": pearson_r(epe, [row.ssim for row in usable]),
    }
    logger.info(f"r(EPE, PSNR) = {result['psnr']:.4f}, r(EPE, SSIM) = {result['ssim']:.4f} over {len(usable)} samples")
    if out_dir is not None:
        write_csv(Path(out_dir) / "correlation_scatter.csv", SCATTER_COLUMNS, [
            {
                "trajectory_id": row.trajectory_id,
                "frame_index": row.frame_index,
                "flow_epe": row.flow_epe,
                "psnr": row.psnr,
                "ssim": row.ssim,
            }
            for row in usable
        ])
        write_csv(Path(out_dir) / "correlation.csv", ["metric", "r", "samples"], [
            {"metric": metric, "r": value, "samples": len(usable)} for metric, value in result.items()
        ])
    return result

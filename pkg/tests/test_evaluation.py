import numpy as np
import pytest

from app.application.services.evaluation_service import (
    PERSISTENCE,
    EvaluationService,
    correlation_analysis,
    score_frames,
    summarize,
)
from app.config.schemas import SamplerConfig
from app.domain.entities.trajectory import MetricsRow
from app.domain.exceptions import ContractViolationError, DegenerateInputError, InsufficientSamplesError
from app.infrastructure.models import WorldModel
from app.utils.image_io import load_ppm, read_csv, read_metrics_csv
from app.utils.metrics import flow_epe, flow_mse, moved_mask, pearson_r, psnr, ssim

from tests.conftest import random_frame, tiny_model_config


FAST = SamplerConfig(ddim_steps=2)


@pytest.fixture(scope="module")
def flow_service():
    return EvaluationService(WorldModel(tiny_model_config("flowdreamer"), seed=0), FAST, num_workers=1)


# metrics

def test_psnr_reference_values():
    image = np.full((4, 4, 3), 0.5)
    assert psnr(image, image) == 99.0
    assert psnr(image, image + 0.1) == pytest.approx(20.0)
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == pytest.approx(0.0)


def test_psnr_mask_selects_pixels():
    gt = np.zeros((2, 2, 3))
    pred = gt.copy()
    pred[0, 0] = 1.0
    mask = np.array([[False, True], [True, True]])
    assert psnr(pred, gt, mask=mask) == 99.0
    with pytest.raises(ContractViolationError):
        psnr(pred, gt, mask=np.zeros((2, 2), dtype=bool))
    pred[1, 1] = 0.1
    assert psnr(pred, gt, mask=mask) == pytest.approx(10.0 * np.log10(9 / 0.03))


def test_ssim_reference_values():
    rng = np.random.default_rng(0)
    image = rng.uniform(0, 1, (12, 12, 3))
    assert ssim(image, image) == pytest.approx(1.0)

    checker = (np.indices((12, 12)).sum(axis=0) % 2).astype(np.float64)
    assert ssim(checker, 1.0 - checker) < 0.0

    a, b = 0.2, 0.4
    c1 = 0.01 ** 2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert ssim(np.full((8, 8), a), np.full((8, 8), b)) == pytest.approx(expected)


def test_ssim_rejects_small_images():
    with pytest.raises(ContractViolationError):
        ssim(np.zeros((6, 9)), np.zeros((6, 9)))
    assert ssim(np.zeros((7, 7)), np.zeros((7, 7))) == pytest.approx(1.0)


def test_flow_errors():
    gt = np.zeros((2, 3, 3))
    pred = np.broadcast_to([0.3, 0.4, 0.0], (2, 3, 3))
    assert flow_epe(pred, gt) == pytest.approx(0.5)
    assert flow_mse(pred, gt) == pytest.approx(0.25 / 3)


def test_pearson_r():
    assert pearson_r([1, 2, 3, 4], [2, 4, 6, 8]) == pytest.approx(1.0)
    assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(InsufficientSamplesError):
        pearson_r([1, 2], [1, 2])
    with pytest.raises(DegenerateInputError):
        pearson_r([1, 1, 1], [1, 2, 3])


def test_moved_mask():
    reference = np.zeros((2, 2, 3))
    frame = reference.copy()
    frame[1, 0, 2] = 0.5
    np.testing.assert_array_equal(moved_mask(frame, reference), [[False, False], [True, False]])


# scoring

def test_score_frames_and_summary():
    frames = [random_frame(seed=i) for i in range(3)]
    rows = score_frames([frames[1].rgb, frames[2].rgb], frames, "7", "oracle")
    assert [row.frame_index for row in rows] == [1, 2]
    assert all(row.psnr == 99.0 for row in rows)
    assert rows[0].flow_epe is None
    summary = summarize(rows)
    metrics = {entry["metric"] for entry in summary}
    assert metrics == {"psnr", "ssim", "psnr_moved"}
    with pytest.raises(ContractViolationError):
        score_frames([frames[1].rgb], frames, "7", "oracle")


def test_correlation_needs_ten_samples(tmp_path):
    rows = [MetricsRow("0", i, psnr=20.0 + i, ssim=0.5, flow_epe=0.1 * i) for i in range(9)]
    with pytest.raises(InsufficientSamplesError):
        correlation_analysis(rows)
    rows = [MetricsRow("0", i, psnr=30.0 - i, ssim=0.9 - 0.01 * i, flow_epe=0.01 * i) for i in range(12)]
    result = correlation_analysis(rows, tmp_path)
    assert result["psnr"] == pytest.approx(-1.0)
    assert result["ssim"] == pytest.approx(-1.0)
    assert len(read_csv(tmp_path / "correlation_scatter.csv")) == 12


# evaluation service

def test_video_prediction_writes_outputs(flow_service, dataset_dir, tmp_path):
    trajectories = flow_service.test_trajectories(dataset_dir)
    report = flow_service.eval_video_prediction(trajectories, seeds=[0], out_dir=tmp_path, panels=1)

    models = {row.model for row in report.rows}
    assert models == {PERSISTENCE, "flowdreamer"}
    model_rows = [row for row in report.rows if row.model == "flowdreamer"]
    assert len(model_rows) == sum(t.steps for t in trajectories)
    assert all(row.flow_epe is not None for row in model_rows)
    assert len(read_metrics_csv(tmp_path / "metrics.csv")) == len(report.rows)
    assert read_csv(tmp_path / "summary.csv")
    panels = sorted((tmp_path / "panels").glob("*.ppm"))
    assert len(panels) == trajectories[0].steps
    assert load_ppm(panels[0]).shape[0] == 16


def test_video_prediction_is_reproducible(flow_service, dataset_dir):
    trajectories = flow_service.test_trajectories(dataset_dir)
    first = flow_service.eval_video_prediction(trajectories, seeds=[1])
    second = flow_service.eval_video_prediction(trajectories, seeds=[1])
    assert [row.psnr for row in first.rows] == [row.psnr for row in second.rows]


def test_one_step_rows_carry_flow_error(flow_service, dataset_dir):
    trajectories = flow_service.test_trajectories(dataset_dir)
    rows = flow_service.one_step_rows(trajectories)
    assert len(rows) == sum(t.steps for t in trajectories)
    assert all(row.flow_epe >= 0.0 for row in rows)


def test_reverse_ablation_of_untrained_flow_is_neutral(flow_service, dataset_dir, tmp_path):
    report = flow_service.reverse_flow_ablation(flow_service.test_trajectories(dataset_dir), out_dir=tmp_path)
    assert report.mean_psnr_delta == 0.0
    assert len(read_csv(tmp_path / "ablation_reverse.csv")) == report.psnr_normal.size


def test_reverse_ablation_refuses_vanilla(dataset_dir):
    service = EvaluationService(WorldModel(tiny_model_config("vanilla"), seed=0), FAST, num_workers=1)
    trajectories = service.test_trajectories(dataset_dir)
    with pytest.raises(ContractViolationError):
        service.reverse_flow_ablation(trajectories)
    with pytest.raises(ContractViolationError):
        service.one_step_rows(trajectories)

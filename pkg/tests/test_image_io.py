import json

import numpy as np
import pytest

from app.domain.entities.trajectory import MetricsRow
from app.utils.image_io import (
    append_csv,
    load_ppm,
    read_csv,
    read_metrics_csv,
    save_ppm,
    side_by_side,
    write_metrics_csv,
    write_run_header,
)


def test_ppm_keeps_eight_bit_values(tmp_path):
    image = np.random.default_rng(0).integers(0, 256, (5, 7, 3)) / 255.0
    path = save_ppm(image, tmp_path / "nested" / "frame.ppm")
    np.testing.assert_allclose(load_ppm(path), image, atol=1e-12)


def test_ppm_clips_out_of_range_values(tmp_path):
    image = np.full((2, 2, 3), 1.5)
    image[0, 0] = -0.3
    loaded = load_ppm(save_ppm(image, tmp_path / "clipped.ppm"))
    assert loaded[0, 0, 0] == 0.0 and loaded[1, 1, 2] == 1.0


def test_side_by_side():
    panel = side_by_side([np.zeros((4, 3, 3)), np.zeros((4, 2, 3))], gap=2)
    assert panel.shape == (4, 7, 3)
    np.testing.assert_array_equal(panel[:, 3:5], 1.0)
    with pytest.raises(ValueError):
        side_by_side([np.zeros((4, 3, 3)), np.zeros((5, 3, 3))])
    with pytest.raises(ValueError):
        side_by_side([])


def test_metrics_table_keeps_missing_values_empty(tmp_path):
    rows = [
        MetricsRow("3", 1, psnr=24.5, ssim=0.8, flow_epe=0.01, model="flowdreamer", seed=2),
        MetricsRow("3", 2, psnr=99.0, ssim=1.0),
    ]
    path = write_metrics_csv(tmp_path / "metrics.csv", rows)
    assert read_csv(path)[1]["flow_epe"] == ""
    assert read_metrics_csv(path) == rows


def test_metrics_row_rejects_uncapped_psnr():
    with pytest.raises(ValueError):
        MetricsRow("0", 1, psnr=120.0, ssim=0.5)
    with pytest.raises(ValueError):
        MetricsRow("0", 1, psnr=20.0, ssim=1.5)


def test_append_csv_writes_header_once(tmp_path):
    path = tmp_path / "log.csv"
    append_csv(path, ["step", "loss"], {"step": 0, "loss": 1.5})
    append_csv(path, ["step", "loss"], {"step": 1, "loss": None})
    assert read_csv(path) == [{"step": "0", "loss": "1.5"}, {"step": "1", "loss": ""}]


def test_run_header(tmp_path):
    write_run_header(tmp_path / "run", {"seed": 3, "out": tmp_path})
    header = json.loads((tmp_path / "run" / "run_header.json").read_text())
    assert header["seed"] == 3
    assert header["out"] == str(tmp_path)

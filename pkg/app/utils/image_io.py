"""PPM panels, CSV tables and run headers."""
import csv
import json
import logging
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
from PIL import Image

from app.domain.entities.trajectory import MetricsRow

logger = logging.getLogger(__name__)

METRICS_COLUMNS = [f.name for f in fields(MetricsRow)]


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_ppm(image: np.ndarray, path: Path) -> Path:
    """Write an [H, W, 3] image in [0, 1] as binary PPM (P6)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PPM")
    return path


def load_ppm(path: Path) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0


def side_by_side(images: Sequence[np.ndarray], gap: int = 1) -> np.ndarray:
    """Concatenate equally tall images horizontally with white separators."""
    if not images:
        raise ValueError("no images to combine")
    height = images[0].shape[0]
    separator = np.ones((height, gap, 3))
    parts: List[np.ndarray] = []
    for i, image in enumerate(images):
        if image.shape[0] != height:
            raise ValueError("panel images must share a height")
        if i:
            parts.append(separator)
        parts.append(np.asarray(image, dtype=np.float64))
    return np.concatenate(parts, axis=1)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """Write rows with a header; missing values become empty cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if row.get(key) is None else row.get(key) for key in columns})
    logger.debug(f"Wrote {path}")
    return path


def append_csv(path: Path, columns: Sequence[str], row: Dict[str, Any]) -> None:
    """Append one row, writing the header when the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        if new_file:
            writer.writeheader()
        writer.writerow({key: "" if row.get(key) is None else row.get(key) for key in columns})


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_metrics_csv(path: Path, rows: Iterable[MetricsRow]) -> Path:
    return write_csv(path, METRICS_COLUMNS, (asdict(row) for row in rows))


def read_metrics_csv(path: Path) -> List[MetricsRow]:
    """Parse a metrics table written by write_metrics_csv."""
    optional = {"flow_epe", "flow_mse", "psnr_moved"}
    rows = []
    for raw in read_csv(path):
        rows.append(MetricsRow(
            trajectory_id=raw["trajectory_id"],
            frame_index=int(raw["frame_index"]),
            psnr=float(raw["psnr"]),
            ssim=float(raw["ssim"]),
            model=raw.get("model", "model"),
            seed=int(raw.get("seed") or 0),
            **{key: float(raw[key]) if raw.get(key) else None for key in optional},
        ))
    return rows


def write_run_header(out_dir: Path, header: Dict[str, Any]) -> Path:
    """Write run_header.json (config, seeds, format versions) into the output directory."""
    path = Path(out_dir) / "run_header.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(header, indent=2, sort_keys=True, default=str), encoding="utf-8")
    return path

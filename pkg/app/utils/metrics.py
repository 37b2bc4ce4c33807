"""Image and flow quality metrics."""
import logging
from typing import Optional

import numpy as np
from scipy import stats
from skimage.metrics import mean_squared_error, peak_signal_noise_ratio, structural_similarity

from app.domain.exceptions import ContractViolationError, DegenerateInputError, InsufficientSamplesError

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
SSIM_WINDOW = 7


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ContractViolationError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def psnr(pred: np.ndarray, gt: np.ndarray, data_range: float = 1.0, mask: Optional[np.ndarray] = None) -> float:
    """
    Peak signal-to-noise ratio in dB, capped at 99 for identical inputs.

    Args:
        pred: Predicted image
        gt: Reference image
        data_range: Value range of the images
        mask: Optional [H, W] pixel selection

    Returns:
        10 log10(range^2 / MSE)
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "psnr")
    if data_range <= 0:
        raise ContractViolationError(f"data_range must be positive, got {data_range}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ContractViolationError("psnr mask selects no pixels")
        pred, gt = pred[mask], gt[mask]
    if mean_squared_error(gt, pred) == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, peak_signal_noise_ratio(gt, pred, data_range=data_range)))


def ssim(pred: np.ndarray, gt: np.ndarray, data_range: float = 1.0) -> float:
    """
    Mean SSIM over uniform 7x7 windows (stride 1) of the channel-mean grayscale.

    Raises:
        ContractViolationError: On shape mismatch or images smaller than the window
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "ssim")
    if pred.ndim == 3:
        pred, gt = pred.mean(axis=2), gt.mean(axis=2)
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise ContractViolationError(f"image {pred.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    score = structural_similarity(pred, gt, data_range=data_range, win_size=SSIM_WINDOW, gaussian_weights=False)
    return float(np.clip(score, -1.0, 1.0))


def flow_epe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean norm of the per-pixel 3-vector difference (meters)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "flow_epe")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def flow_mse(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, "flow_mse")
    return float(np.mean((pred - gt) ** 2))


def pearson_r(x, y) -> float:
    """
    Sample Pearson correlation.

    Raises:
        InsufficientSamplesError: Fewer than 3 pairs
        DegenerateInputError: Either input is constant
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    _same_shape(x, y, "pearson_r")
    if x.size < 3:
        raise InsufficientSamplesError(f"pearson_r needs at least 3 samples, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("pearson_r is undefined for constant input")
    r = stats.pearsonr(x, y)[0]
    return float(np.clip(r, -1.0, 1.0))


def moved_mask(frame: np.ndarray, reference: np.ndarray, tolerance: float = 1e-6) -> np.ndarray:
    """[H, W] mask of pixels whose color differs from the reference."""
    frame = np.asarray(frame, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _same_shape(frame, reference, "moved_mask")
    return np.any(np.abs(frame - reference) > tolerance, axis=-1)

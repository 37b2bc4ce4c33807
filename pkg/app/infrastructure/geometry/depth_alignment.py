"""Scale-and-shift alignment of relative depth to metric depth."""
from typing import Optional, Tuple

import numpy as np

from app.domain.exceptions import DegenerateSystemError


def align_scale_shift(
    d_rel: np.ndarray,
    d_met: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tuple[float, float]:
    """
    Least-squares (s, t) minimizing sum over mask of (s * d_rel + t - d_met)^2.

    Raises:
        DegenerateSystemError: Fewer than 2 samples or constant d_rel under the mask
    """
    d_rel = np.asarray(d_rel, dtype=np.float64)
    d_met = np.asarray(d_met, dtype=np.float64)
    if d_rel.shape != d_met.shape:
        raise DegenerateSystemError(f"shape mismatch: {d_rel.shape} vs {d_met.shape}")
    mask = np.ones(d_rel.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    x, y = d_rel[mask], d_met[mask]
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateSystemError("scale/shift alignment needs at least 2 samples with non-constant d_rel")
    design = np.stack([x, np.ones_like(x)], axis=1)
    (scale, shift), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(scale), float(shift)

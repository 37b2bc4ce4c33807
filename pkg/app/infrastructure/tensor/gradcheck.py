"""Central finite-difference gradient checking."""
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from app.domain.exceptions import ContractViolationError
from app.infrastructure.tensor.tensor import Tensor, backward, no_grad


logger = logging.getLogger(__name__)


def _scalar(value: Tensor, where: str) -> float:
    if value.data.size != 1:
        raise ContractViolationError(f"{where}: function must return a scalar, got shape {value.shape}")
    result = float(value.data.reshape(-1)[0])
    if not np.isfinite(result):
        raise ContractViolationError(f"{where}: function value is not finite ({result})")
    return result


def _check_eps(eps: float) -> None:
    if not (0.0 < eps <= 1e-2):
        raise ContractViolationError(f"eps must lie in (0, 1e-2], got {eps}")


def grad_check(function: Callable[[Tensor], Tensor], point, eps: float = 1e-5) -> float:
    """
    Compare the analytic gradient of a scalar function with central differences.

    Args:
        function: Maps a Tensor to a scalar Tensor
        point: Evaluation point (converted to float64)
        eps: Finite-difference step in (0, 1e-2]

    Returns:
        max_i |analytic_i - numeric_i| / max(1, |analytic_i|)

    Raises:
        ContractViolationError: For a bad eps, a non-scalar or non-finite value
    """
    _check_eps(eps)
    x = np.array(point, dtype=np.float64)
    leaf = Tensor(x.copy(), requires_grad=True)
    out = function(leaf)
    _scalar(out, "grad_check")
    analytic = backward(out, [leaf])[0]

    numeric = np.zeros_like(x)
    with no_grad():
        for i in range(x.size):
            shifted = x.copy()
            shifted.flat[i] += eps
            f_plus = _scalar(function(Tensor(shifted)), "grad_check")
            shifted.flat[i] -= 2 * eps
            f_minus = _scalar(function(Tensor(shifted)), "grad_check")
            numeric.flat[i] = (f_plus - f_minus) / (2 * eps)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def grad_check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    coordinates_per_param: Optional[int] = 4,
    seed: int = 0,
) -> float:
    """
    Gradient check of a closure w.r.t. parameter tensors, perturbed in place.

    With `coordinates_per_param` set, only that many seeded random coordinates
    of each parameter are checked (full networks are too large to sweep).
    """
    _check_eps(eps)
    for param in params:
        param.grad = None
    loss = loss_fn()
    _scalar(loss, "grad_check_parameters")
    analytic = backward(loss, list(params))
    for param in params:
        param.grad = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for param, grad in zip(params, analytic):
            size = param.data.size
            if coordinates_per_param is None or coordinates_per_param >= size:
                coords = np.arange(size)
            else:
                coords = rng.choice(size, size=coordinates_per_param, replace=False)
            for i in coords:
                original = param.data.flat[i]
                param.data.flat[i] = original + eps
                f_plus = _scalar(loss_fn(), "grad_check_parameters")
                param.data.flat[i] = original - eps
                f_minus = _scalar(loss_fn(), "grad_check_parameters")
                param.data.flat[i] = original
                numeric = (f_plus - f_minus) / (2 * eps)
                error = abs(grad.flat[i] - numeric) / max(1.0, abs(grad.flat[i]))
                worst = max(worst, float(error))
    logger.debug(f"grad_check_parameters: {len(params)} tensors, max relative error {worst:.3e}")
    return worst

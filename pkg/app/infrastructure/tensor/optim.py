"""Adam with decoupled weight decay."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from app.domain.exceptions import ContractViolationError
from app.infrastructure.tensor.tensor import Tensor


logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moments and hyperparameters for one parameter tensor."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, params: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """
    One AdamW update.

    Params are scaled by (1 - lr * weight_decay) before the moment update;
    the step counter is incremented before bias correction.

    Args:
        params: Current parameter values
        grads: Gradient of the loss w.r.t. params
        state: Optimizer state for these params (updated in place)

    Returns:
        (new params, state)
    """
    if params.shape != grads.shape or state.first_moment.shape != params.shape:
        raise ContractViolationError(
            f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    lr = float(state.learning_rate)
    b1, b2 = float(state.beta1), float(state.beta2)
    state.step_count += 1
    params = params * (1.0 - lr * float(state.weight_decay))
    state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads
    state.second_moment = b2 * state.second_moment + (1.0 - b2) * (grads * grads)
    m_hat = state.first_moment / (1.0 - b1 ** state.step_count)
    v_hat = state.second_moment / (1.0 - b2 ** state.step_count)
    params = params - lr * m_hat / (np.sqrt(v_hat) + float(state.epsilon))
    return params.astype(grads.dtype, copy=False), state


@dataclass
class AdamW:
    """Optimizer over a named parameter set."""

    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: Dict[str, AdamState] = field(default_factory=dict)
    step_count: int = 0

    def _state_for(self, name: str, param: Tensor) -> AdamState:
        state = self.states.get(name)
        if state is None:
            state = AdamState.zeros_like(
                param.data,
                learning_rate=self.learning_rate,
                beta1=self.beta1,
                beta2=self.beta2,
                epsilon=self.epsilon,
                weight_decay=self.weight_decay,
            )
            self.states[name] = state
        return state

    def step(self, named_params: Iterable[Tuple[str, Tensor]]) -> None:
        """Update every parameter in place; a missing gradient counts as zero."""
        for name, param in named_params:
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            state = self._state_for(name, param)
            param.data, _ = adam_step(param.data, grad.astype(param.dtype, copy=False), state)
        self.step_count += 1

    @staticmethod
    def zero_grad(named_params: Iterable[Tuple[str, Tensor]]) -> None:
        for _, param in named_params:
            param.grad = None

    def load_moments(self, name: str, first: np.ndarray, second: np.ndarray, step_count: Optional[int] = None) -> None:
        """Restore one parameter's moments (checkpoint resume)."""
        self.states[name] = AdamState(
            first_moment=first,
            second_moment=second,
            step_count=self.step_count if step_count is None else step_count,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
        )

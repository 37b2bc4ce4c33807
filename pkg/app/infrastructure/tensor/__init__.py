"""Numpy tensor engine with reverse-mode autodiff."""
from app.infrastructure.tensor.tensor import GradGraph, GraphNode, Tensor, as_tensor, backward, is_grad_enabled, no_grad
from app.infrastructure.tensor.ops import AttentionWeights
from app.infrastructure.tensor.optim import AdamState, AdamW, adam_step
from app.infrastructure.tensor.gradcheck import grad_check, grad_check_parameters
from app.infrastructure.tensor.modules import Conv2d, GroupNorm, Linear, Module

__all__ = [
    "GradGraph",
    "GraphNode",
    "Tensor",
    "as_tensor",
    "backward",
    "is_grad_enabled",
    "no_grad",
    "AttentionWeights",
    "AdamState",
    "AdamW",
    "adam_step",
    "grad_check",
    "grad_check_parameters",
    "Conv2d",
    "GroupNorm",
    "Linear",
    "Module",
]

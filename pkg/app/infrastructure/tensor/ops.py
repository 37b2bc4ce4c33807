"""Differentiable primitives.

Every op takes Tensors (array-likes are lifted to constants of the first
tensor operand's dtype), computes its forward value with numpy and records
a backward closure returning one gradient per parent.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, softmax as _softmax

from app.domain.exceptions import ContractViolationError
from app.infrastructure.tensor.tensor import Tensor


Operand = Union[Tensor, np.ndarray, float, int]


def _pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    dtype = like.dtype if like is not None else None
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=dtype))
    return a, b


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise arithmetic

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), "add", _backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), "sub", _backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), "mul", _backward)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)

    def _backward(g):
        return (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return Tensor.from_op(a.data / b.data, (a, b), "div", _backward)


def neg(x: Tensor) -> Tensor:
    return Tensor.from_op(-x.data, (x,), "neg", lambda g: (-g,))


# Linear algebra and shape ops

def matmul(a: Operand, b: Operand) -> Tensor:
    """Batched matrix product over the last two axes (numpy broadcasting)."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolationError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolationError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    def _backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return Tensor.from_op(np.matmul(a.data, b.data), (a, b), "matmul", _backward)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def _backward(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(a % x.ndim for a in axes)
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), "sum", _backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    return Tensor.from_op(x.data.reshape(tuple(shape)), (x,), "reshape", lambda g: (g.reshape(original),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(
        np.transpose(x.data, axes), (x,), "transpose", lambda g: (np.transpose(g, inverse),)
    )


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractViolationError("concat needs at least one tensor")
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", _backward)


# Nonlinearities

def silu(x: Tensor) -> Tensor:
    s = expit(x.data)

    def _backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return Tensor.from_op(x.data * s, (x,), "silu", _backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _softmax(x.data, axis=axis)

    def _backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor.from_op(y, (x,), "softmax", _backward)


# Network primitives

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """
    2D cross-correlation with zero padding.

    Args:
        x: Input [B, C, H, W]
        weight: Kernel [O, C, kh, kw]
        bias: Optional bias [O]
        stride: Step between windows (>= 1)
        pad: Zero padding on every side

    Returns:
        Output [B, O, H', W'] with H' = (H + 2*pad - kh) // stride + 1

    Raises:
        ContractViolationError: On rank, channel or extent mismatch
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ContractViolationError(f"conv2d expects rank-4 input and kernel, got {x.shape}, {weight.shape}")
    batch, channels, height, width = x.shape
    out_channels, kernel_channels, kh, kw = weight.shape
    if channels != kernel_channels:
        raise ContractViolationError(f"conv2d channel mismatch: input C={channels}, kernel C={kernel_channels}")
    if stride < 1 or pad < 0:
        raise ContractViolationError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    if kh > height + 2 * pad or kw > width + 2 * pad:
        raise ContractViolationError(f"kernel {kh}x{kw} larger than padded input {height}x{width} (pad {pad})")
    if bias is not None and bias.shape != (out_channels,):
        raise ContractViolationError(f"conv2d bias must have shape ({out_channels},), got {bias.shape}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def _backward(g):
        grad_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += np.einsum(
                    "bohw,oc->bchw", g, weight.data[:, :, i, j], optimize=True
                )
        grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width]
        grads = [np.ascontiguousarray(grad_x), grad_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, "conv2d", _backward)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Group normalization over [B, C, H, W] with per-channel affine (fused backward)."""
    if x.ndim != 4:
        raise ContractViolationError(f"group_norm expects [B, C, H, W], got {x.shape}")
    batch, channels, height, width = x.shape
    if channels % groups:
        raise ContractViolationError(f"{channels} channels not divisible into {groups} groups")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ContractViolationError("group_norm affine parameters must have shape [C]")

    grouped = x.data.reshape(batch, groups, -1)
    centered = grouped - grouped.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std
    x_hat = normalized.reshape(x.shape)
    out = x_hat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def _backward(g):
        grad_gamma = (g * x_hat).sum(axis=(0, 2, 3))
        grad_beta = g.sum(axis=(0, 2, 3))
        g_hat = (g * gamma.data[None, :, None, None]).reshape(batch, groups, -1)
        grad_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - normalized * (g_hat * normalized).mean(axis=-1, keepdims=True)
        )
        return grad_x.reshape(x.shape), grad_gamma, grad_beta

    return Tensor.from_op(out, (x, gamma, beta), "group_norm", _backward)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    batch, channels, height, width = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def _backward(g):
        return (g.reshape(batch, channels, height, factor, width, factor).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), "upsample_nearest", _backward)


def film(features: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """
    Feature-wise linear modulation: gamma[c] * features[b, c, h, w] + beta[c].

    gamma and beta may be per-channel [C] or per-sample [B, C].
    """
    if features.ndim != 4:
        raise ContractViolationError(f"film expects [B, C, H, W] features, got {features.shape}")
    channels = features.shape[1]
    if gamma.shape != beta.shape or gamma.shape[-1] != channels or gamma.ndim not in (1, 2):
        raise ContractViolationError(
            f"film modulation shapes {gamma.shape}, {beta.shape} do not match {channels} channels"
        )
    if gamma.ndim == 2 and gamma.shape[0] != features.shape[0]:
        raise ContractViolationError("per-sample film parameters must match the batch size")
    view = (1, channels, 1, 1) if gamma.ndim == 1 else (gamma.shape[0], channels, 1, 1)
    return add(mul(features, reshape(gamma, view)), reshape(beta, view))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


@dataclass(frozen=True)
class AttentionWeights:
    """Projection matrices of one single-head cross-attention block."""

    query: Tensor
    key: Tensor
    value: Tensor
    output: Tensor


def cross_attention(
    features: Tensor,
    context: Tensor,
    weights: AttentionWeights,
    return_weights: bool = False,
):
    """
    Residual single-head cross-attention.

    out = features + softmax(Q K^T / sqrt(d_k)) V W_o, with Q from features and
    K, V from context.

    Args:
        features: Queries [N, d] or [B, N, d]
        context: Context tokens [M, d_ctx] or [B, M, d_ctx]
        weights: Projection matrices
        return_weights: Also return the row-stochastic attention matrix

    Returns:
        Output shaped like features (and the attention Tensor when requested)

    Raises:
        ContractViolationError: If there are no queries or no context tokens
    """
    if features.ndim < 2 or context.ndim < 2:
        raise ContractViolationError("cross_attention expects rank >= 2 features and context")
    if context.shape[-2] == 0:
        raise ContractViolationError("cross_attention requires at least one context token")
    if features.shape[-2] == 0:
        raise ContractViolationError("cross_attention requires at least one query")
    queries = matmul(features, weights.query)
    keys = matmul(context, weights.key)
    values = matmul(context, weights.value)
    scale = 1.0 / math.sqrt(queries.shape[-1])
    attention = softmax(mul(matmul(queries, swap_last(keys)), scale), axis=-1)
    out = add(features, matmul(matmul(attention, values), weights.output))
    if return_weights:
        return out, attention
    return out


# Losses

def mse_loss(prediction: Tensor, target: Operand) -> Tensor:
    """Element-mean squared difference."""
    prediction, target = _pair(prediction, target)
    if prediction.shape != target.shape:
        raise ContractViolationError(f"shape mismatch: {prediction.shape} vs {target.shape}")
    diff = sub(prediction, target)
    return mean(mul(diff, diff))

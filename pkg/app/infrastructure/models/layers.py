"""U-Net building blocks: residual blocks, action encoder, cross-attention."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.domain.exceptions import ContractViolationError
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.modules import Conv2d, GroupNorm, Linear, Module, uniform_fan_in
from app.infrastructure.tensor.tensor import Tensor


def sinusoidal_embedding(steps, dim: int, dtype=np.float32) -> np.ndarray:
    """
    Transformer-style position encoding of diffusion step indices.

    Args:
        steps: Step indices, scalar or [B]
        dim: Even embedding width

    Returns:
        Array [B, dim] (sin half then cos half)
    """
    if dim % 2:
        raise ContractViolationError(f"embedding width must be even, got {dim}")
    steps = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = steps[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(dtype)


@dataclass(frozen=True)
class ActionEmbedding:
    """Action context: token sequence for cross-attention plus a pooled vector for FiLM."""

    tokens: Tensor
    pooled: Tensor


class ActionEncoder(Module):
    """MLP lifting a planar action to a short sequence of embedding tokens."""

    def __init__(self, rng, action_dim: int, embed_dim: int, num_tokens: int,
                 action_scale: float, dtype=np.float32):
        self.hidden = Linear(rng, action_dim, embed_dim, dtype=dtype)
        self.to_tokens = Linear(rng, embed_dim, embed_dim * num_tokens, dtype=dtype)
        self._action_dim = action_dim
        self._embed_dim = embed_dim
        self._num_tokens = num_tokens
        self._scale = action_scale
        self._dtype = dtype

    def __call__(self, actions) -> ActionEmbedding:
        actions = np.asarray(actions, dtype=np.float64)
        if actions.ndim != 2 or actions.shape[1] != self._action_dim:
            raise ContractViolationError(
                f"actions must be [B, {self._action_dim}], got {actions.shape}"
            )
        scaled = Tensor((actions / self._scale).astype(self._dtype))
        hidden = ops.silu(self.hidden(scaled))
        tokens = ops.reshape(self.to_tokens(hidden), (actions.shape[0], self._num_tokens, self._embed_dim))
        return ActionEmbedding(tokens=tokens, pooled=ops.mean(tokens, axis=1))


class ResBlock(Module):
    """
    GroupNorm-SiLU-Conv residual block.

    The diffusion-step embedding is added after the first convolution; with
    FiLM conditioning the second normalization is modulated per sample by
    (1 + scale, shift) computed from the pooled action embedding.
    """

    def __init__(self, rng, in_channels: int, out_channels: int, groups: int,
                 time_dim: Optional[int] = None, film_dim: Optional[int] = None, dtype=np.float32):
        self.norm1 = GroupNorm(in_channels, groups, dtype)
        self.conv1 = Conv2d(rng, in_channels, out_channels, dtype=dtype)
        self.time_proj = Linear(rng, time_dim, out_channels, dtype=dtype) if time_dim else None
        self.film_scale = Linear(rng, film_dim, out_channels, zero_init=True, dtype=dtype) if film_dim else None
        self.film_shift = Linear(rng, film_dim, out_channels, zero_init=True, dtype=dtype) if film_dim else None
        self.norm2 = GroupNorm(out_channels, groups, dtype)
        self.conv2 = Conv2d(rng, out_channels, out_channels, dtype=dtype)
        self.skip = Conv2d(rng, in_channels, out_channels, kernel=1, dtype=dtype) if in_channels != out_channels else None
        self._out_channels = out_channels

    def __call__(self, x: Tensor, time_emb: Optional[Tensor] = None,
                 action: Optional[ActionEmbedding] = None) -> Tensor:
        h = self.conv1(ops.silu(self.norm1(x)))
        if self.time_proj is not None:
            if time_emb is None:
                raise ContractViolationError("this block needs a step embedding")
            bias = self.time_proj(ops.silu(time_emb))
            h = ops.add(h, ops.reshape(bias, (x.shape[0], self._out_channels, 1, 1)))
        h = self.norm2(h)
        if self.film_scale is not None:
            if action is None:
                raise ContractViolationError("FiLM block needs an action embedding")
            gamma = ops.add(self.film_scale(action.pooled), 1.0)
            h = ops.film(h, gamma, self.film_shift(action.pooled))
        h = self.conv2(ops.silu(h))
        residual = x if self.skip is None else self.skip(x)
        return ops.add(residual, h)


class CrossAttentionBlock(Module):
    """Pixels attend over action tokens; output is x + attention(x)."""

    def __init__(self, rng, channels: int, context_dim: int, attention_dim: Optional[int] = None,
                 dtype=np.float32):
        attention_dim = attention_dim or channels
        self.query = uniform_fan_in(rng, (channels, attention_dim), channels, dtype)
        self.key = uniform_fan_in(rng, (context_dim, attention_dim), context_dim, dtype)
        self.value = uniform_fan_in(rng, (context_dim, attention_dim), context_dim, dtype)
        self.output = uniform_fan_in(rng, (attention_dim, channels), attention_dim, dtype)

    def __call__(self, x: Tensor, context: Tensor) -> Tensor:
        batch, channels, height, width = x.shape
        tokens = ops.reshape(ops.transpose(x, (0, 2, 3, 1)), (batch, height * width, channels))
        weights = ops.AttentionWeights(self.query, self.key, self.value, self.output)
        attended = ops.cross_attention(tokens, context, weights)
        return ops.transpose(ops.reshape(attended, (batch, height, width, channels)), (0, 3, 1, 2))


class Downsample(Module):
    def __init__(self, rng, channels: int, dtype=np.float32):
        self.conv = Conv2d(rng, channels, channels, stride=2, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample(Module):
    def __init__(self, rng, channels: int, dtype=np.float32):
        self.conv = Conv2d(rng, channels, channels, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(ops.upsample_nearest(x, 2))


class ConditionEncoder(Module):
    """Two-layer convolution stack turning depth (and flow) into condition features."""

    def __init__(self, rng, in_channels: int, out_channels: int, dtype=np.float32):
        self.conv1 = Conv2d(rng, in_channels, out_channels, dtype=dtype)
        self.conv2 = Conv2d(rng, out_channels, out_channels, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv2(ops.silu(self.conv1(x)))

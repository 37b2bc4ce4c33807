"""Conditional U-Net shared by the flow predictor and the denoiser."""
import logging
from typing import List, Optional

import numpy as np

from app.config.schemas import ModelConfig
from app.domain.exceptions import ContractViolationError
from app.infrastructure.models.layers import (
    ActionEmbedding,
    ActionEncoder,
    CrossAttentionBlock,
    Downsample,
    ResBlock,
    Upsample,
    sinusoidal_embedding,
)
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.modules import Conv2d, GroupNorm, Linear, Module
from app.infrastructure.tensor.tensor import Tensor


logger = logging.getLogger(__name__)


class _Level(Module):
    """Residual blocks (and optional attention) at one resolution."""

    def __init__(self, blocks: List[ResBlock], attentions: List[CrossAttentionBlock]):
        self.blocks = blocks
        self.attentions = attentions

    def __call__(self, h: Tensor, time_emb: Optional[Tensor], action: ActionEmbedding) -> Tensor:
        for i, block in enumerate(self.blocks):
            h = block(h, time_emb, action)
            if self.attentions:
                h = self.attentions[i](h, action.tokens)
        return h


class ConditionalUNet(Module):
    """
    Encoder-decoder with one skip connection per resolution level.

    Actions enter through cross-attention at `attention_resolutions` and in the
    middle block, or through FiLM in every residual block. An optional
    sinusoidal step embedding is added to every residual block.

    Args:
        rng: Initialization generator
        config: Architecture sizes
        in_channels: Input channels
        out_channels: Output channels
        conditioning: "cross_attention" or "film"
        with_time: Whether the net takes a diffusion step
        zero_init_output: Zero the last convolution (output 0 at init)
        output_scale: Constant multiplying the output
    """

    def __init__(self, rng, config: ModelConfig, in_channels: int, out_channels: int,
                 conditioning: str = "cross_attention", with_time: bool = True,
                 zero_init_output: bool = False, output_scale: float = 1.0):
        if conditioning not in ("cross_attention", "film"):
            raise ValueError(f"Unsupported conditioning type: {conditioning}")
        dtype = np.dtype(config.dtype)
        groups = config.norm_groups
        embed = config.action_embed_dim
        film_dim = embed if conditioning == "film" else None
        use_attention = conditioning == "cross_attention"
        time_dim = config.time_embed_dim if with_time else None
        widths = [config.base_channels * m for m in config.channel_multipliers]

        self.action_encoder = ActionEncoder(
            rng, config.action_dim, embed, config.action_tokens, config.action_scale, dtype
        )
        if with_time:
            self.time_mlp1 = Linear(rng, time_dim, time_dim, dtype=dtype)
            self.time_mlp2 = Linear(rng, time_dim, time_dim, dtype=dtype)
        self.conv_in = Conv2d(rng, in_channels, widths[0], dtype=dtype)

        self.down: List[_Level] = []
        self.downsamplers: List[Downsample] = []
        channels = widths[0]
        for level, width in enumerate(widths):
            attend = use_attention and config.level_resolutions[level] in config.attention_resolutions
            blocks, attentions = [], []
            for _ in range(config.num_res_blocks):
                blocks.append(ResBlock(rng, channels, width, groups, time_dim, film_dim, dtype))
                channels = width
                if attend:
                    attentions.append(CrossAttentionBlock(rng, width, embed, dtype=dtype))
            self.down.append(_Level(blocks, attentions))
            if level < len(widths) - 1:
                self.downsamplers.append(Downsample(rng, width, dtype))

        self.mid_block1 = ResBlock(rng, channels, channels, groups, time_dim, film_dim, dtype)
        self.mid_attention = CrossAttentionBlock(rng, channels, embed, dtype=dtype) if use_attention else None
        self.mid_block2 = ResBlock(rng, channels, channels, groups, time_dim, film_dim, dtype)

        self.up: List[_Level] = []
        self.upsamplers: List[Upsample] = []
        for level in range(len(widths) - 1, -1, -1):
            width = widths[level]
            attend = use_attention and config.level_resolutions[level] in config.attention_resolutions
            blocks, attentions = [], []
            for i in range(config.num_res_blocks):
                in_ch = channels + width if i == 0 else width
                blocks.append(ResBlock(rng, in_ch, width, groups, time_dim, film_dim, dtype))
                channels = width
                if attend:
                    attentions.append(CrossAttentionBlock(rng, width, embed, dtype=dtype))
            self.up.append(_Level(blocks, attentions))
            if level > 0:
                self.upsamplers.append(Upsample(rng, width, dtype))

        self.norm_out = GroupNorm(channels, groups, dtype)
        self.conv_out = Conv2d(rng, channels, out_channels, zero_init=zero_init_output, dtype=dtype)

        self._in_channels = in_channels
        self._with_time = with_time
        self._time_dim = time_dim
        self._output_scale = output_scale
        self._dtype = dtype
        self._extent = (config.height, config.width)

    @property
    def in_channels(self) -> int:
        return self._in_channels

    def embed_action(self, actions) -> ActionEmbedding:
        return self.action_encoder(actions)

    def _time_embedding(self, steps, batch: int) -> Tensor:
        steps = np.broadcast_to(np.atleast_1d(np.asarray(steps)), (batch,))
        table = Tensor(sinusoidal_embedding(steps, self._time_dim, self._dtype))
        return self.time_mlp2(ops.silu(self.time_mlp1(table)))

    def __call__(self, x: Tensor, action: ActionEmbedding, steps=None) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self._in_channels or tuple(x.shape[2:]) != self._extent:
            raise ContractViolationError(
                f"expected input [B, {self._in_channels}, {self._extent[0]}, {self._extent[1]}], got {x.shape}"
            )
        if action.tokens.shape[0] != x.shape[0]:
            raise ContractViolationError("action batch does not match input batch")
        time_emb = None
        if self._with_time:
            if steps is None:
                raise ContractViolationError("diffusion step required")
            time_emb = self._time_embedding(steps, x.shape[0])

        h = self.conv_in(x)
        skips = []
        for level, stage in enumerate(self.down):
            h = stage(h, time_emb, action)
            skips.append(h)
            if level < len(self.downsamplers):
                h = self.downsamplers[level](h)

        h = self.mid_block1(h, time_emb, action)
        if self.mid_attention is not None:
            h = self.mid_attention(h, action.tokens)
        h = self.mid_block2(h, time_emb, action)

        for i, stage in enumerate(self.up):
            h = stage(ops.concat([h, skips.pop()], axis=1), time_emb, action)
            if i < len(self.upsamplers):
                h = self.upsamplers[i](h)

        out = self.conv_out(ops.silu(self.norm_out(h)))
        if self._output_scale != 1.0:
            out = ops.mul(out, self._output_scale)
        return out

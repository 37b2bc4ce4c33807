"""Two-stage world model: flow prediction, condition assembly, denoising.

Stage 1 predicts per-pixel scene flow from the current RGB-D frame and the
action. Stage 2 is a diffusion denoiser over the next RGB-D frame,
conditioned on the current frame, features of depth and predicted flow, and
the action. The vanilla variant skips stage 1 and conditions on depth only.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config.schemas import ModelConfig, SamplerConfig
from app.domain.entities.geometry import RgbdFrame, SceneFlowField
from app.domain.entities.world import Action
from app.domain.exceptions import ContractViolationError
from app.infrastructure.diffusion.sampler import ddim_sample, ddim_substeps, ddpm_sample
from app.infrastructure.diffusion.schedule import NoiseSchedule, schedule_from_config
from app.infrastructure.models.layers import ActionEmbedding, ConditionEncoder
from app.infrastructure.models.normalization import FrameNormalizer
from app.infrastructure.models.unet import ConditionalUNet
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.modules import Module
from app.infrastructure.tensor.tensor import Tensor, as_tensor, no_grad


logger = logging.getLogger(__name__)

FRAME_CHANNELS = 4
FLOW_CHANNELS = 3

# Applied to predicted flow [B, H, W, 3] before it conditions stage 2
FlowTransform = Callable[[np.ndarray], np.ndarray]


def step_seed(seed: int, step: int) -> int:
    """Independent sampling seed for step `step` of a rollout."""
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1)[0])


def reverse_flow(flow: np.ndarray) -> np.ndarray:
    return -flow


@dataclass
class ConditionPack:
    """Everything the denoiser is conditioned on for one batch."""

    c_t: Tensor
    z_t: Tensor
    a_t: ActionEmbedding

    def __post_init__(self):
        """Check spatial agreement of condition features and frame channels."""
        if self.c_t.ndim != 4 or self.z_t.ndim != 4:
            raise ContractViolationError("condition tensors must be [B, C, H, W]")
        if self.c_t.shape[0] != self.z_t.shape[0] or self.c_t.shape[2:] != self.z_t.shape[2:]:
            raise ContractViolationError(
                f"condition features {self.c_t.shape} do not match frame channels {self.z_t.shape}"
            )


@dataclass
class StepPrediction:
    """Batched one-step prediction; flow is None for the vanilla model."""

    rgb: np.ndarray
    depth: np.ndarray
    flow: Optional[np.ndarray] = None


class WorldModel(Module):
    """
    Flow-conditioned RGB-D diffusion world model.

    Args:
        config: Architecture and mode
        seed: Parameter initialization seed
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        dtype = np.dtype(config.dtype)
        vanilla = config.mode == "vanilla"
        self.flow_net = None if vanilla else ConditionalUNet(
            rng,
            config,
            in_channels=FRAME_CHANNELS,
            out_channels=FLOW_CHANNELS,
            conditioning="cross_attention",
            with_time=False,
            zero_init_output=True,
            output_scale=config.flow_scale,
        )
        condition_inputs = 1 if vanilla else 1 + FLOW_CHANNELS
        self.condition_encoder = ConditionEncoder(rng, condition_inputs, config.cond_downsample_channels, dtype)
        self.denoiser = ConditionalUNet(
            rng,
            config,
            in_channels=2 * FRAME_CHANNELS + config.cond_downsample_channels,
            out_channels=FRAME_CHANNELS,
            conditioning=config.action_conditioning,
            with_time=True,
        )
        self._config = config
        self._dtype = dtype
        self._schedule = schedule_from_config(config.diffusion)
        self._normalizer = FrameNormalizer(config.depth_min, config.depth_max)
        self._logger = logging.getLogger(__name__)
        self._logger.debug(f"WorldModel({config.mode}) with {self.parameter_count()} parameters")

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def mode(self) -> str:
        return self._config.mode

    @property
    def uses_flow(self) -> bool:
        return self.flow_net is not None

    @property
    def schedule(self) -> NoiseSchedule:
        return self._schedule

    @property
    def normalizer(self) -> FrameNormalizer:
        return self._normalizer

    # Stage 1

    def encode(self, rgb: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Batched frames to normalized [B, 4, H, W] channels."""
        return self._normalizer.encode(rgb, depth, self._dtype)

    def flow_forward(self, z_t, actions) -> Tensor:
        """Predicted flow [B, 3, H, W] in meters (differentiable)."""
        if self.flow_net is None:
            raise ContractViolationError("the vanilla model has no flow predictor")
        return self.flow_net(as_tensor(z_t, self._dtype), self.flow_net.embed_action(actions))

    def flow_predict(self, frame: RgbdFrame, action: Action) -> SceneFlowField:
        """Stage-1 flow for a single frame, channels-last, in meters."""
        with no_grad():
            z_t = self.encode(frame.rgb[None], frame.depth[None])
            flow = self.flow_forward(z_t, action.as_array()[None])
        return SceneFlowField(flow.data[0].transpose(1, 2, 0).astype(np.float64))

    @staticmethod
    def flow_loss(predicted: Tensor, target) -> Tensor:
        """Element-mean squared flow error over all pixels and components."""
        return ops.mse_loss(predicted, target)

    # Stage 2

    def build_condition(self, z_t, depth: np.ndarray, flow, actions) -> ConditionPack:
        """
        Assemble the denoiser condition.

        Args:
            z_t: Normalized current frame [B, 4, H, W]
            depth: Metric depth of the current frame [B, H, W]
            flow: Flow [B, 3, H, W] in meters (Tensor keeps the gradient path); ignored by vanilla
            actions: Actions [B, action_dim]

        Raises:
            ContractViolationError: If a flow model is given no flow
        """
        z_t = as_tensor(z_t, self._dtype)
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (z_t.shape[0],) + tuple(z_t.shape[2:]):
            raise ContractViolationError(f"depth {depth.shape} does not match frame channels {z_t.shape}")
        depth_channel = Tensor(self._normalizer.normalize_depth(depth)[:, None].astype(self._dtype))
        if self.uses_flow:
            if flow is None:
                raise ContractViolationError(f"mode {self.mode!r} requires a flow to build the condition")
            flow = as_tensor(flow, self._dtype)
            features = ops.concat([depth_channel, ops.mul(flow, 1.0 / self._config.flow_scale)], axis=1)
        else:
            features = depth_channel
        return ConditionPack(
            c_t=self.condition_encoder(features),
            z_t=z_t,
            a_t=self.denoiser.embed_action(actions),
        )

    def denoise_eps(self, z_k, pack: ConditionPack, k) -> Tensor:
        """Noise estimate for z^k given the condition (k scalar or per sample)."""
        self._schedule.step_index(k)
        z_k = as_tensor(z_k, self._dtype)
        if z_k.shape != pack.z_t.shape:
            raise ContractViolationError(f"z_k shape {z_k.shape} does not match z_t shape {pack.z_t.shape}")
        x = ops.concat([z_k, pack.z_t, pack.c_t], axis=1)
        return self.denoiser(x, pack.a_t, steps=k)

    def _sample(self, pack: ConditionPack, sampler: SamplerConfig, seed: int) -> np.ndarray:
        shape = tuple(pack.z_t.shape)

        def eps_fn(z, k, condition, _action):
            return self.denoise_eps(z.astype(self._dtype), condition, k).data

        if sampler.sampler == "ddpm":
            return ddpm_sample(eps_fn, pack, None, self._schedule, seed, shape)
        substeps = ddim_substeps(self._schedule.k_steps, sampler.ddim_steps)
        return ddim_sample(eps_fn, pack, None, substeps, self._schedule, seed, shape, sampler.clip_sample)

    # Inference

    def predict_next_batch(
        self,
        rgb: np.ndarray,
        depth: np.ndarray,
        actions: np.ndarray,
        sampler: SamplerConfig,
        seed: int,
        flow_transform: Optional[FlowTransform] = None,
    ) -> StepPrediction:
        """
        Predict next frames for a batch of (frame, action) pairs.

        Args:
            rgb: Current RGB [B, H, W, 3]
            depth: Current depth [B, H, W]
            actions: Actions [B, action_dim]
            sampler: Reverse-process settings
            seed: Seed of the initial noise
            flow_transform: Applied to the predicted flow before conditioning

        Returns:
            StepPrediction with RGB in [0, 1] and depth in (0, depth_max]
        """
        actions = np.asarray(actions, dtype=np.float64)
        with no_grad():
            z_t = self.encode(rgb, depth)
            flow = None
            if self.uses_flow:
                flow = self.flow_forward(z_t, actions).data.transpose(0, 2, 3, 1).astype(np.float64)
                if flow_transform is not None:
                    flow = flow_transform(flow)
            condition_flow = None if flow is None else np.ascontiguousarray(flow.transpose(0, 3, 1, 2))
            pack = self.build_condition(z_t, depth, condition_flow, actions)
            z0 = self._sample(pack, sampler, seed)
        rgb_next, depth_next = self._normalizer.decode(z0)
        return StepPrediction(rgb=rgb_next, depth=depth_next, flow=flow)

    def predict_next(
        self,
        frame: RgbdFrame,
        action: Action,
        sampler: Optional[SamplerConfig] = None,
        seed: int = 0,
        flow_transform: Optional[FlowTransform] = None,
    ) -> RgbdFrame:
        prediction = self.predict_next_batch(
            frame.rgb[None], frame.depth[None], action.as_array()[None],
            sampler or SamplerConfig(), seed, flow_transform,
        )
        return RgbdFrame(prediction.rgb[0], prediction.depth[0])

    def rollout(
        self,
        frame0: RgbdFrame,
        actions: Sequence[Action],
        sampler: Optional[SamplerConfig] = None,
        seed: int = 0,
    ) -> Tuple[List[RgbdFrame], List[SceneFlowField]]:
        """
        Autoregressive rollout; each predicted frame (depth included) feeds the next step.

        Returns:
            T + 1 frames (frame0 first) and the T predicted flows (empty for vanilla)
        """
        sampler = sampler or SamplerConfig()
        frames = [frame0]
        flows: List[SceneFlowField] = []
        for t, action in enumerate(actions):
            current = frames[-1]
            prediction = self.predict_next_batch(
                current.rgb[None], current.depth[None], action.as_array()[None], sampler, step_seed(seed, t)
            )
            frames.append(RgbdFrame(prediction.rgb[0], prediction.depth[0]))
            if prediction.flow is not None:
                flows.append(SceneFlowField(prediction.flow[0]))
        return frames, flows

    def rollout_batch(
        self, frame: RgbdFrame, action_sequences: np.ndarray, sampler: SamplerConfig, seed: int
    ) -> np.ndarray:
        """Roll every candidate sequence [P, T, A] forward from one frame; returns RGB [P, T, H, W, 3]."""
        sequences = np.asarray(action_sequences, dtype=np.float64)
        population, horizon = sequences.shape[:2]
        rgb = np.repeat(frame.rgb[None], population, axis=0)
        depth = np.repeat(frame.depth[None], population, axis=0)
        out = np.empty((population, horizon) + frame.rgb.shape, dtype=np.float64)
        for t in range(horizon):
            prediction = self.predict_next_batch(rgb, depth, sequences[:, t], sampler, step_seed(seed, t))
            rgb, depth = prediction.rgb, prediction.depth
            out[:, t] = rgb
        return out

    # Parameters

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        """
        Overwrite parameters in place.

        Raises:
            ContractViolationError: On missing, unexpected or misshapen entries
        """
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        unexpected = sorted(set(arrays) - set(params))
        if missing or unexpected:
            raise ContractViolationError(f"parameter names differ: missing {missing[:3]}, unexpected {unexpected[:3]}")
        for name, param in params.items():
            value = np.asarray(arrays[name])
            if value.shape != param.shape:
                raise ContractViolationError(f"{name}: expected shape {param.shape}, got {value.shape}")
            param.data = value.astype(param.dtype)

    def check_finite(self) -> None:
        for name, param in self.named_parameters():
            if not np.all(np.isfinite(param.data)):
                raise ContractViolationError(f"parameter {name} is not finite")

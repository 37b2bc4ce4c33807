"""Use case for verifying every differentiable primitive and the full loss (Use Case Pattern)."""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from app.application.services.training_service import total_loss
from app.config.schemas import DiffusionConfig, ModelConfig
from app.domain.entities.trajectory import SampleBatch
from app.infrastructure.models.world_model import WorldModel
from app.infrastructure.tensor import ops
from app.infrastructure.tensor.gradcheck import grad_check, grad_check_parameters
from app.infrastructure.tensor.ops import AttentionWeights
from app.infrastructure.tensor.tensor import Tensor


logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
EPS = 1e-5


def check_model_config(mode: str = "flowdreamer", action_conditioning: str = "cross_attention") -> ModelConfig:
    """Smallest double-precision architecture that still has every block type."""
    return ModelConfig(
        height=8,
        width=8,
        base_channels=4,
        channel_multipliers=(1, 2),
        attention_resolutions=(4,),
        num_res_blocks=1,
        action_embed_dim=4,
        action_tokens=2,
        time_embed_dim=4,
        cond_downsample_channels=2,
        norm_groups=2,
        mode=mode,
        action_conditioning=action_conditioning,
        dtype="float64",
        diffusion=DiffusionConfig(k_steps=10),
    )


def check_batch(config: ModelConfig, size: int = 2, seed: int = 0) -> SampleBatch:
    """Random frame pairs with flow inside the configured depth range."""
    rng = np.random.default_rng(seed)
    shape = (size, config.height, config.width)
    return SampleBatch(
        rgb_t=rng.uniform(0, 1, shape + (3,)),
        depth_t=rng.uniform(config.depth_min, config.depth_max, shape),
        actions=rng.uniform(-0.05, 0.05, (size, config.action_dim)),
        rgb_t1=rng.uniform(0, 1, shape + (3,)),
        depth_t1=rng.uniform(config.depth_min, config.depth_max, shape),
        flow=rng.normal(0, 0.02, shape + (3,)),
        sample_ids=[(0, i) for i in range(size)],
    )


def _primitive_cases(rng: np.random.Generator) -> Dict[str, Tuple[Callable[[Tensor], Tensor], np.ndarray]]:
    def const(*shape):
        return Tensor(rng.standard_normal(shape))

    def readout(*shape):
        weights = const(*shape)
        return lambda out: ops.sum(ops.mul(out, weights))

    r34, r3, r4, r35 = readout(3, 4), readout(3), readout(4), readout(3, 5)
    b4, c34, c45 = const(4), const(3, 4), const(4, 5)
    image = const(1, 2, 5, 5)
    kernel = const(3, 2, 3, 3)
    bias3 = const(3)
    r_conv = readout(1, 3, 3, 3)
    r_norm, gamma4, beta4 = readout(2, 4, 3, 3), const(4), const(4)
    r_up = readout(1, 2, 4, 4)
    r_film, film_beta = readout(2, 4, 3, 3), const(2, 4)
    features = const(2, 4, 3, 3)
    context = const(2, 2, 5)
    attention = AttentionWeights(query=const(4, 3), key=const(5, 3), value=const(5, 4), output=const(4, 4))
    r_attention = readout(2, 3, 4)
    w45, bias5, r_lin = const(4, 5), const(5), readout(3, 5)
    r_concat = readout(3, 8)
    queries = const(2, 3, 4)

    return {
        "add": (lambda x: r34(ops.add(x, b4)), rng.standard_normal((3, 4))),
        "sub": (lambda x: r34(ops.sub(c34, x)), rng.standard_normal((3, 4))),
        "mul": (lambda x: r34(ops.mul(x, ops.mul(x, c34))), rng.standard_normal((3, 4))),
        "div": (lambda x: r34(ops.div(c34, x)), 1.0 + rng.uniform(0, 1, (3, 4))),
        "neg": (lambda x: r34(ops.neg(x)), rng.standard_normal((3, 4))),
        "matmul": (lambda x: r35(ops.matmul(x, c45)), rng.standard_normal((3, 4))),
        "sum": (lambda x: r3(ops.sum(ops.mul(x, x), axis=1)), rng.standard_normal((3, 4))),
        "mean": (lambda x: r4(ops.mean(ops.mul(x, x), axis=0)), rng.standard_normal((3, 4))),
        "reshape_transpose": (
            lambda x: r34(ops.transpose(ops.reshape(ops.mul(x, x), (4, 3)))),
            rng.standard_normal((3, 4)),
        ),
        "concat": (lambda x: r_concat(ops.concat([x, c34], axis=1)), rng.standard_normal((3, 4))),
        "silu": (lambda x: r34(ops.silu(x)), rng.standard_normal((3, 4))),
        "softmax": (lambda x: r34(ops.softmax(x, axis=-1)), rng.standard_normal((3, 4))),
        "conv2d_input": (
            lambda x: r_conv(ops.conv2d(x, kernel, bias3, stride=2, pad=1)),
            rng.standard_normal((1, 2, 5, 5)),
        ),
        "conv2d_weight": (
            lambda w: r_conv(ops.conv2d(image, w, bias3, stride=2, pad=1)),
            rng.standard_normal((3, 2, 3, 3)),
        ),
        "group_norm": (lambda x: r_norm(ops.group_norm(x, gamma4, beta4, groups=2)), rng.standard_normal((2, 4, 3, 3))),
        "upsample_nearest": (lambda x: r_up(ops.upsample_nearest(ops.mul(x, x))), rng.standard_normal((1, 2, 2, 2))),
        "film": (lambda g: r_film(ops.film(features, g, film_beta)), rng.standard_normal((2, 4))),
        "linear": (lambda x: r_lin(ops.linear(x, w45, bias5)), rng.standard_normal((3, 4))),
        "cross_attention_features": (
            lambda x: r_attention(ops.cross_attention(x, context, attention)),
            rng.standard_normal((2, 3, 4)),
        ),
        "cross_attention_context": (
            lambda c: r_attention(ops.cross_attention(queries, c, attention)),
            rng.standard_normal((2, 2, 5)),
        ),
        "mse_loss": (lambda x: ops.mse_loss(x, c34), rng.standard_normal((3, 4))),
    }


@dataclass
class GradientCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(error < self.tolerance for error in self.errors.values())

    @property
    def worst(self) -> Tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


class GradientCheckUseCase:
    """
    Central-difference check of every primitive and of L_total in all three modes.

    Everything runs in double precision at seeded random points.
    """

    def __init__(self, seed: int = 0, eps: float = EPS, tolerance: float = TOLERANCE):
        self.seed = seed
        self.eps = eps
        self.tolerance = tolerance

    def check_primitives(self) -> Dict[str, float]:
        cases = _primitive_cases(np.random.default_rng(self.seed))
        return {name: grad_check(function, point, self.eps) for name, (function, point) in cases.items()}

    def check_total_loss(self, mode: str, alpha: float = 0.7, coordinates_per_param: int = 2) -> float:
        config = check_model_config(mode)
        model = WorldModel(config, seed=self.seed)
        batch = check_batch(config, seed=self.seed)
        return grad_check_parameters(
            lambda: total_loss(model, batch, alpha, self.seed, 0)[0],
            model.parameters(),
            eps=self.eps,
            coordinates_per_param=coordinates_per_param,
            seed=self.seed,
        )

    def execute(self) -> GradientCheckReport:
        report = GradientCheckReport(tolerance=self.tolerance)
        report.errors.update(self.check_primitives())
        for mode in ("flowdreamer", "septrain", "vanilla"):
            report.errors[f"total_loss[{mode}]"] = self.check_total_loss(mode)
        for name, error in report.errors.items():
            level = logging.INFO if error < self.tolerance else logging.ERROR
            logger.log(level, f"gradcheck {name}: max relative error {error:.3e}")
        return report

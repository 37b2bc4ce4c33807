"""Use case for the quick closed-form self-test (Use Case Pattern)."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from app.application.services.planning_service import goal_cost
from app.application.services.training_service import total_loss
from app.application.use_cases.gradient_check_use_case import check_batch, check_model_config
from app.config.schemas import EnvConfig, SamplerConfig
from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.planning import GoalSpec
from app.domain.entities.world import Action
from app.domain.interfaces.checkpoint_repository import CheckpointPayload
from app.infrastructure.diffusion.schedule import linear_schedule, predict_z0, q_sample
from app.infrastructure.geometry.camera import project, unproject
from app.infrastructure.models.world_model import WorldModel
from app.infrastructure.repositories.checkpoint_repository import BinaryCheckpointRepository
from app.infrastructure.simulator.pushworld import get_world
from app.infrastructure.tensor.tensor import no_grad
from app.utils.metrics import flow_epe, pearson_r, psnr, ssim


logger = logging.getLogger(__name__)


def _metric_caps() -> bool:
    image = np.random.default_rng(0).uniform(0, 1, (16, 16, 3))
    return psnr(image, image) == 99.0 and math.isclose(ssim(image, image), 1.0, abs_tol=1e-12)


def _psnr_formula() -> bool:
    return math.isclose(psnr(np.full((8, 8, 3), 0.1), np.zeros((8, 8, 3))), 20.0, abs_tol=1e-9)


def _flow_epe_345() -> bool:
    flow = np.zeros((4, 4, 3))
    return math.isclose(flow_epe(flow + np.array([0.3, 0.0, 0.4]), flow), 0.5, abs_tol=1e-12)


def _pearson_line() -> bool:
    x = np.arange(10, dtype=np.float64)
    return math.isclose(pearson_r(x, 2 * x + 1), 1.0, abs_tol=1e-12) and math.isclose(pearson_r(x, -x), -1.0, abs_tol=1e-12)


def _camera_round_trip() -> bool:
    config = EnvConfig()
    depth = np.random.default_rng(1).uniform(0.5, 2.0, (config.height, config.width))
    u, v, z = project(unproject(depth, config.intrinsics), config.intrinsics)
    grid_v, grid_u = np.mgrid[0:config.height, 0:config.width]
    return max(np.max(np.abs(u - grid_u)), np.max(np.abs(v - grid_v)), np.max(np.abs(z - depth))) < 1e-9


def _static_world_has_zero_flow() -> bool:
    world = get_world(EnvConfig())
    state = world.reset(7)
    return bool(np.all(world.gt_flow(state, state).flow == 0.0))


def _q_sample_inversion() -> bool:
    schedule = linear_schedule(100, 1e-4, 0.02)
    rng = np.random.default_rng(2)
    z0 = rng.standard_normal((2, 4, 8, 8))
    eps = rng.standard_normal(z0.shape)
    z_k = q_sample(z0, 50, eps, schedule)
    return float(np.max(np.abs(predict_z0(z_k, eps, 50, schedule) - z0))) < 1e-10


def _goal_cost_zero() -> bool:
    world = get_world(EnvConfig())
    frame = world.render(world.reset(3))
    return goal_cost(frame, GoalSpec(frame)) == 0.0


def _loss_linear_in_alpha() -> bool:
    config = check_model_config("flowdreamer")
    model = WorldModel(config, seed=0)
    batch = check_batch(config)
    with no_grad():
        base, components = total_loss(model, batch, 0.0, 0, 0)
        weighted, _ = total_loss(model, batch, 10.0, 0, 0)
    return math.isclose(weighted.item() - base.item(), 10.0 * components.flow, rel_tol=1e-9, abs_tol=1e-12)


def _ddim_deterministic() -> bool:
    config = check_model_config("vanilla")
    model = WorldModel(config, seed=0)
    rng = np.random.default_rng(4)
    frame = RgbdFrame(rng.uniform(0, 1, (8, 8, 3)), rng.uniform(config.depth_min, config.depth_max, (8, 8)))
    sampler = SamplerConfig(ddim_steps=3)
    first = model.predict_next(frame, Action(0.01, 0.0), sampler, seed=5)
    second = model.predict_next(frame, Action(0.01, 0.0), sampler, seed=5)
    return bool(np.array_equal(first.rgb, second.rgb) and np.array_equal(first.depth, second.depth))


def _checkpoint_round_trip() -> bool:
    config = check_model_config("septrain").model_copy(update={"dtype": "float32"})
    model = WorldModel(config, seed=0)
    repository = BinaryCheckpointRepository()
    payload = CheckpointPayload(config.canonical_json(), 3, model.state_dict(), {}, {})
    restored = repository.decode(repository.encode(payload))
    return restored.step == 3 and all(
        np.array_equal(restored.parameters[name], value) for name, value in payload.parameters.items()
    )


CHECKS: List[Tuple[str, Callable[[], bool]]] = [
    ("metric caps", _metric_caps),
    ("psnr formula", _psnr_formula),
    ("flow epe 3-4-5", _flow_epe_345),
    ("pearson line", _pearson_line),
    ("camera round trip", _camera_round_trip),
    ("static world zero flow", _static_world_has_zero_flow),
    ("q_sample inversion", _q_sample_inversion),
    ("goal cost zero", _goal_cost_zero),
    ("loss linear in alpha", _loss_linear_in_alpha),
    ("ddim deterministic", _ddim_deterministic),
    ("checkpoint round trip", _checkpoint_round_trip),
]


@dataclass
class SelfTestReport:
    results: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.results.values())

    @property
    def failures(self) -> List[str]:
        return [name for name, ok in self.results.items() if not ok]


class SelfTestUseCase:
    """Runs fast closed-form checks across all modules."""

    def __init__(self, checks: List[Tuple[str, Callable[[], bool]]] = None):
        self.checks = checks if checks is not None else CHECKS

    def execute(self) -> SelfTestReport:
        report = SelfTestReport()
        for name, check in self.checks:
            try:
                report.results[name] = bool(check())
            except Exception as e:
                logger.error(f"selftest {name} raised: {e}", exc_info=True)
                report.results[name] = False
            logger.info(f"selftest {name}: {'ok' if report.results[name] else 'FAILED'}")
        return report

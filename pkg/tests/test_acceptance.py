"""Desk-scale acceptance measurements. Run with `pytest -m slow`."""
import numpy as np
import pytest

from app.application.services.planning_service import PlanningService
from app.application.use_cases.gradient_check_use_case import GradientCheckUseCase
from app.config.schemas import EnvConfig, PlanConfig
from app.infrastructure.factories.rollout_factory import RolloutFactory
from app.infrastructure.simulator import PushWorld, make_push_task, scripted_policy

from tests.conftest import tiny_env_config

pytestmark = pytest.mark.slow


def _all_blocks_within(state, goal, tolerance):
    return all(
        np.linalg.norm(block.center - goal.block_by_id(block.id).center) < tolerance for block in state.blocks
    )


def test_full_gradient_check():
    report = GradientCheckUseCase(seed=0).execute()
    assert report.passed, report.worst


def test_scripted_policy_reaches_goals():
    config = tiny_env_config()
    world = PushWorld(config)
    reached = 0
    for seed in range(10):
        task = make_push_task(config, seed=seed)
        state = task.start
        for _ in range(200):
            if _all_blocks_within(state, task.goal, 0.01):
                break
            state = world.step(state, scripted_policy(state, task.goal, seed, config))
        reached += int(_all_blocks_within(state, task.goal, 0.01))
    assert reached >= 9


def test_oracle_planner_success_rate(tmp_path):
    env_config = EnvConfig(n_blocks=1)
    service = PlanningService(env_config, PlanConfig())
    summary = service.run(
        lambda: RolloutFactory.create_rollout_model("oracle", env_config),
        seeds=[0],
        tasks=20,
        out_dir=tmp_path,
    )
    assert summary.min_success >= 0.8

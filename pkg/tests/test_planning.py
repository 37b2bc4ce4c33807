import numpy as np
import pytest

from app.application.services.planning_service import (
    PlanningService,
    cem_optimize,
    cem_plan,
    goal_cost,
    mpc_episode,
)
from app.config.schemas import PlanConfig
from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.planning import GoalSpec
from app.domain.exceptions import PlanningError
from app.domain.interfaces.rollout_model import IRolloutModel
from app.infrastructure.factories.rollout_factory import RolloutFactory
from app.infrastructure.simulator import PushWorld, SimulatorRollout, make_push_task
from app.utils.image_io import read_csv

from tests.conftest import random_frame, tiny_env_config


TARGET = np.array([[0.02, -0.01], [0.0, 0.03]])


def _quadratic(candidates, iteration):
    return np.sum((candidates - TARGET) ** 2, axis=(1, 2))


class _ConstantRollout(IRolloutModel):
    """Imagines the same frame for every step of every candidate."""

    def __init__(self, rgb):
        self._rgb = rgb

    @property
    def name(self):
        return "constant"

    def observe(self, state, frame):
        pass

    def rollout_rgb(self, frame, action_sequences, seed):
        population, horizon = np.asarray(action_sequences).shape[:2]
        return np.broadcast_to(self._rgb, (population, horizon) + self._rgb.shape).copy()


# cost

def test_goal_cost():
    frame = random_frame()
    assert goal_cost(frame, GoalSpec(frame)) == 0.0
    shifted = RgbdFrame(np.clip(frame.rgb, 0.0, 0.9) + 0.1, frame.depth)
    assert goal_cost(shifted, GoalSpec(RgbdFrame(np.clip(frame.rgb, 0.0, 0.9), frame.depth))) == pytest.approx(0.01)


def test_goal_cost_ignores_depth():
    frame = random_frame()
    deeper = RgbdFrame(frame.rgb, frame.depth + 0.5)
    assert goal_cost(deeper, GoalSpec(frame)) == 0.0


# CEM

def test_cem_recovers_quadratic_minimum():
    config = PlanConfig(horizon=2, population=64, elites=8, iterations=10)
    result = cem_optimize(_quadratic, config, seed=0)
    np.testing.assert_allclose(result.actions, TARGET, atol=1e-2)
    assert result.cost == pytest.approx(float(_quadratic(result.actions[None], 0)[0]))


def test_cem_is_deterministic():
    config = PlanConfig(horizon=2, population=16, elites=4, iterations=3)
    first = cem_optimize(_quadratic, config, seed=4)
    second = cem_optimize(_quadratic, config, seed=4)
    np.testing.assert_array_equal(first.actions, second.actions)
    assert first.cost == second.cost


def test_cem_candidates_stay_inside_bounds():
    config = PlanConfig(horizon=3, population=32, elites=4, iterations=2)
    seen = []

    def score(candidates, iteration):
        seen.append(candidates.copy())
        return np.zeros(candidates.shape[0])

    cem_optimize(score, config, seed=1)
    stacked = np.concatenate(seen)
    assert stacked.min() >= -0.05 and stacked.max() <= 0.05


def test_elite_costs_never_increase():
    config = PlanConfig(horizon=2, population=16, elites=4, iterations=6)
    history = cem_optimize(_quadratic, config, seed=2).elite_costs
    for before, after in zip(history, history[1:]):
        assert np.all(after <= before)


def test_non_finite_cost_names_the_candidate():
    def score(candidates, iteration):
        costs = np.zeros(candidates.shape[0])
        costs[5] = np.nan
        return costs

    with pytest.raises(PlanningError) as info:
        cem_optimize(score, PlanConfig(population=8, elites=2), seed=0)
    assert info.value.candidate == 5


def test_summed_and_final_aggregation_scale_with_horizon():
    frame = random_frame()
    goal = GoalSpec(RgbdFrame(np.zeros_like(frame.rgb), frame.depth))
    rollout = _ConstantRollout(frame.rgb)
    final = cem_plan(rollout, frame, goal, PlanConfig(horizon=3, population=4, elites=2, iterations=1), seed=0)
    summed = cem_plan(rollout, frame, goal,
                      PlanConfig(horizon=3, population=4, elites=2, iterations=1, cost_aggregation="summed"), seed=0)
    assert summed.cost == pytest.approx(3 * final.cost)


# MPC

def test_episode_already_at_goal_succeeds_without_acting():
    config = tiny_env_config()
    world = PushWorld(config)
    start = world.reset(0)
    outcome = mpc_episode(world, start, GoalSpec(world.render(start)), PlanConfig(), seed=0)
    assert outcome.success
    assert outcome.steps == 0
    assert outcome.costs == [0.0]


def test_episode_respects_step_budget():
    config = tiny_env_config()
    world = PushWorld(config)
    task = make_push_task(config, seed=1)
    outcome = mpc_episode(world, task.start, GoalSpec(task.goal_frame), PlanConfig(max_steps=3), seed=0)
    assert outcome.policy == "random"
    assert outcome.steps <= 3
    assert len(outcome.costs) == outcome.steps + 1


def test_oracle_rollouts_do_not_depend_on_worker_count():
    config = tiny_env_config()
    world = PushWorld(config)
    state = make_push_task(config, seed=4).start
    frame = world.render(state)
    sequences = np.random.default_rng(0).uniform(-config.a_max, config.a_max, (6, 3, 2))
    rollouts = []
    for workers in (1, 3):
        model = SimulatorRollout(config, num_workers=workers)
        model.observe(state, frame)
        rollouts.append(model.rollout_rgb(frame, sequences, seed=0))
    assert rollouts[0].shape == (6, 3, 16, 16, 3)
    np.testing.assert_array_equal(rollouts[0], rollouts[1])


def test_oracle_episode_is_reproducible():
    config = tiny_env_config()
    world = PushWorld(config)
    task = make_push_task(config, seed=2)
    plan = PlanConfig(horizon=2, population=8, elites=2, iterations=2, max_steps=2)
    runs = [
        mpc_episode(world, task.start, GoalSpec(task.goal_frame), plan, seed=3, rollout=SimulatorRollout(config))
        for _ in range(2)
    ]
    assert runs[0].costs == runs[1].costs
    assert runs[0].policy == "oracle"


def test_random_policy_run_writes_tables(tmp_path):
    service = PlanningService(tiny_env_config(), PlanConfig(horizon=2, max_steps=2))
    summary = service.run(None, seeds=[0, 1], tasks=2, out_dir=tmp_path, dump_frames=True)
    assert summary.policy == "random"
    assert set(summary.success_rates) == {0, 1}
    rows = read_csv(tmp_path / "plan_results.csv")
    assert len(rows) == 4
    assert read_csv(tmp_path / "plan_summary.csv")[0]["tasks"] == "2"
    assert any((tmp_path / "frames").iterdir())


def test_rollout_factory():
    config = tiny_env_config()
    assert RolloutFactory.create_rollout_model("random", config) is None
    assert RolloutFactory.create_rollout_model("oracle", config).name == "oracle"
    with pytest.raises(ValueError):
        RolloutFactory.create_rollout_model("model", config)
    with pytest.raises(ValueError):
        RolloutFactory.create_rollout_model("telepathy", config)

"""Visual model-predictive control with the cross-entropy method (Service Layer Pattern)."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.config.schemas import EnvConfig, PlanConfig
from app.domain.entities.geometry import RgbdFrame
from app.domain.entities.planning import EpisodeOutcome, GoalSpec
from app.domain.entities.world import Action, WorldState
from app.domain.exceptions import ContractViolationError, PlanningError
from app.domain.interfaces.rollout_model import IRolloutModel
from app.infrastructure.simulator.pushworld import PushWorld, get_world
from app.infrastructure.simulator.tasks import make_push_task
from app.middleware.monitoring import track_planning_episode, track_rollout
from app.utils.image_io import save_ppm, write_csv


logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["policy", "seed", "task", "task_seed", "steps", "initial_cost", "final_cost", "success"]
SUMMARY_COLUMNS = ["policy", "seeds", "tasks", "min_success", "mean_success", "max_success"]

# (candidates [P, T, A], iteration) -> cost per candidate [P]
ScoreFunction = Callable[[np.ndarray, int], np.ndarray]


def sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


def rgb_cost(rgb: np.ndarray, goal_rgb: np.ndarray) -> np.ndarray:
    """Mean squared RGB error over the trailing [H, W, 3] axes."""
    rgb = np.asarray(rgb, dtype=np.float64)
    goal_rgb = np.asarray(goal_rgb, dtype=np.float64)
    if rgb.shape[-3:] != goal_rgb.shape:
        raise ContractViolationError(f"frame extent {rgb.shape[-3:]} does not match goal {goal_rgb.shape}")
    diff = rgb - goal_rgb
    return np.mean(diff * diff, axis=(-3, -2, -1))


def goal_cost(frame: RgbdFrame, goal: GoalSpec) -> float:
    """Mean squared RGB error between an observation and the goal (depth is ignored)."""
    return float(rgb_cost(frame.rgb, goal.rgb))


@dataclass
class CemResult:
    """Best-ever plan plus the final sampling distribution."""

    actions: np.ndarray
    cost: float
    mean: np.ndarray
    std: np.ndarray
    elite_costs: List[np.ndarray] = field(default_factory=list)


def cem_optimize(score: ScoreFunction, config: PlanConfig, seed: int, horizon: Optional[int] = None) -> CemResult:
    """
    Minimize `score` over action sequences inside the configured bounds.

    Each iteration scores the clipped current mean plus population - 1
    Gaussian samples; the elites of the previous iteration compete with the
    new candidates, so elite costs never increase.

    Args:
        score: Cost of each candidate sequence
        config: CEM parameters and action bounds
        seed: Sampling seed
        horizon: Sequence length (defaults to config.horizon)

    Returns:
        CemResult with the best sequence ever scored

    Raises:
        PlanningError: If any candidate cost is not finite
    """
    horizon = horizon or config.horizon
    low = np.asarray(config.action_low, dtype=np.float64)
    high = np.asarray(config.action_high, dtype=np.float64)
    shape = (horizon, config.action_dim)
    mean = np.zeros(shape)
    std = np.broadcast_to((high - low) / 2.0, shape).copy()
    rng = np.random.default_rng(seed)

    elites = np.empty((0,) + shape)
    elite_costs = np.empty(0)
    history: List[np.ndarray] = []
    for iteration in range(config.iterations):
        noise = rng.standard_normal((config.population,) + shape)
        noise[0] = 0.0
        candidates = np.clip(mean + std * noise, low, high)
        costs = np.asarray(score(candidates, iteration), dtype=np.float64).reshape(-1)
        if costs.shape[0] != config.population:
            raise ContractViolationError(f"score returned {costs.shape[0]} costs for {config.population} candidates")
        bad = np.flatnonzero(~np.isfinite(costs))
        if bad.size:
            index = int(bad[0])
            raise PlanningError(
                f"candidate {index} in iteration {iteration} has non-finite cost {costs[index]}",
                candidate=index,
            )

        pool = np.concatenate([elites, candidates])
        pool_costs = np.concatenate([elite_costs, costs])
        order = np.argsort(pool_costs, kind="stable")[:config.elites]
        elites, elite_costs = pool[order], pool_costs[order]
        history.append(elite_costs.copy())

        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), config.std_floor)
        logger.debug(f"CEM iteration {iteration}: best {elite_costs[0]:.6f}, elite mean {elite_costs.mean():.6f}")

    return CemResult(actions=elites[0].copy(), cost=float(elite_costs[0]), mean=mean, std=std, elite_costs=history)


def cem_plan(
    rollout: IRolloutModel,
    frame: RgbdFrame,
    goal: GoalSpec,
    config: PlanConfig,
    seed: int,
) -> CemResult:
    """
    Plan an action sequence by scoring imagined rollouts against the goal image.

    The cost is the goal cost of the last imagined frame, or the sum over
    all imagined frames when cost_aggregation is "summed".
    """

    def score(candidates: np.ndarray, iteration: int) -> np.ndarray:
        with track_rollout(rollout.name):
            imagined = rollout.rollout_rgb(frame, candidates, sub_seed(seed, iteration))
        per_step = rgb_cost(imagined, goal.rgb)
        if config.cost_aggregation == "summed":
            return per_step.sum(axis=1)
        return per_step[:, -1]

    return cem_optimize(score, config, seed)


def mpc_episode(
    world: PushWorld,
    start: WorldState,
    goal: GoalSpec,
    config: PlanConfig,
    seed: int,
    rollout: Optional[IRolloutModel] = None,
    max_steps: Optional[int] = None,
    task_seed: int = 0,
) -> EpisodeOutcome:
    """
    Run one receding-horizon episode in the true simulator.

    Plans, executes the first replan_every actions, re-observes and repeats
    until the true observation is within the success threshold or the step
    budget is spent. Without a rollout model the actions are drawn uniformly
    within the bounds (random policy).

    Returns:
        EpisodeOutcome; success depends only on the final true observation
    """
    max_steps = config.max_steps if max_steps is None else max_steps
    if config.action_dim != world.config.action_dim:
        raise ContractViolationError(
            f"plan actions have {config.action_dim} components, the world expects {world.config.action_dim}"
        )
    policy = rollout.name if rollout is not None else "random"
    low = np.asarray(config.action_low, dtype=np.float64)
    high = np.asarray(config.action_high, dtype=np.float64)
    explore = np.random.default_rng(sub_seed(seed, 1))

    state = start
    frame = world.render(state)
    cost = goal_cost(frame, goal)
    outcome = EpisodeOutcome(policy=policy, task_seed=task_seed, seed=seed, success=False,
                             costs=[cost], frames=[frame])
    round_index = 0
    while cost >= config.success_threshold and outcome.steps < max_steps:
        if rollout is None:
            plan = explore.uniform(low, high, size=(config.replan_every, config.action_dim))
        else:
            rollout.observe(state, frame)
            plan = cem_plan(rollout, frame, goal, config, sub_seed(seed, 2, round_index)).actions
        for action in plan[:config.replan_every]:
            if outcome.steps >= max_steps:
                break
            state = world.step(state, Action.from_array(action))
            frame = world.render(state)
            cost = goal_cost(frame, goal)
            outcome.actions.append(np.asarray(action, dtype=np.float64))
            outcome.frames.append(frame)
            outcome.costs.append(cost)
            if cost < config.success_threshold:
                break
        round_index += 1

    outcome.success = cost < config.success_threshold
    track_planning_episode(policy, outcome.success)
    return outcome


@dataclass
class PlanningSummary:
    """Success statistics of one policy across planner seeds."""

    policy: str
    success_rates: Dict[int, float]
    outcomes: List[EpisodeOutcome] = field(default_factory=list)

    @property
    def min_success(self) -> float:
        return min(self.success_rates.values())

    @property
    def mean_success(self) -> float:
        return float(np.mean(list(self.success_rates.values())))

    @property
    def max_success(self) -> float:
        return max(self.success_rates.values())


class PlanningService:
    """
    Evaluates a policy on seeded 1-block push tasks.

    The same task list is used for every planner seed, so success rates of
    different policies are directly comparable.
    """

    def __init__(self, env_config: EnvConfig, plan_config: PlanConfig):
        self.env_config = env_config.model_copy(update={"n_blocks": 1})
        self.plan_config = plan_config
        self.world = get_world(self.env_config)
        self._logger = logging.getLogger(__name__)

    def task_seeds(self, tasks: int, seed: int) -> List[int]:
        return [sub_seed(seed, 3, task) for task in range(tasks)]

    def run(
        self,
        rollout_factory: Optional[Callable[[], IRolloutModel]],
        seeds: Sequence[int],
        tasks: int,
        task_seed: int = 0,
        out_dir: Optional[Path] = None,
        dump_frames: bool = False,
    ) -> PlanningSummary:
        """
        Run every (planner seed, task) episode.

        Args:
            rollout_factory: Builds the rollout model (None selects the random policy)
            seeds: Planner seeds
            tasks: Tasks per seed
            task_seed: Seed of the task generator
            out_dir: Directory for plan_results.csv, plan_summary.csv and frame dumps
            dump_frames: Save every true observation as PPM

        Returns:
            PlanningSummary
        """
        if not seeds or tasks < 1:
            raise ContractViolationError("planning needs at least one seed and one task")
        push_tasks = [
            make_push_task(self.env_config, s, min_start_cost=self.plan_config.success_threshold)
            for s in self.task_seeds(tasks, task_seed)
        ]
        rollout = rollout_factory() if rollout_factory is not None else None
        policy = rollout.name if rollout is not None else "random"
        self._logger.info(f"Planning with policy {policy}: {len(seeds)} seeds x {tasks} tasks")

        outcomes: List[EpisodeOutcome] = []
        rows: List[dict] = []
        rates: Dict[int, float] = {}
        for seed in seeds:
            successes = 0
            for index, task in enumerate(push_tasks):
                outcome = mpc_episode(
                    self.world,
                    task.start,
                    GoalSpec(task.goal_frame),
                    self.plan_config,
                    sub_seed(seed, 4, index),
                    rollout=rollout,
                    task_seed=task.seed,
                )
                successes += int(outcome.success)
                outcomes.append(outcome)
                rows.append({
                    "policy": policy,
                    "seed": seed,
                    "task": index,
                    "task_seed": task.seed,
                    "steps": outcome.steps,
                    "initial_cost": outcome.costs[0],
                    "final_cost": outcome.final_cost,
                    "success": int(outcome.success),
                })
                if out_dir is not None and dump_frames:
                    for step, frame in enumerate(outcome.frames):
                        save_ppm(frame.rgb, Path(out_dir) / "frames" / f"{policy}_s{seed}_t{index}_{step:03d}.ppm")
            rates[seed] = successes / len(push_tasks)
            self._logger.info(f"policy {policy} seed {seed}: success rate {rates[seed]:.2f}")

        summary = PlanningSummary(policy=policy, success_rates=rates, outcomes=outcomes)
        if out_dir is not None:
            write_csv(Path(out_dir) / "plan_results.csv", RESULT_COLUMNS, rows)
            write_csv(Path(out_dir) / "plan_summary.csv", SUMMARY_COLUMNS, [{
                "policy": policy,
                "seeds": len(seeds),
                "tasks": tasks,
                "min_success": summary.min_success,
                "mean_success": summary.mean_success,
                "max_success": summary.max_success,
            }])
        self._logger.info(
            f"policy {policy}: success min {summary.min_success:.2f} "
            f"mean {summary.mean_success:.2f} max {summary.max_success:.2f}"
        )
        return summary

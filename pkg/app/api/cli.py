"""Command-line surface binding every module together."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.application.services.evaluation_service import correlation_analysis
from app.application.services.planning_service import PlanningService
from app.application.use_cases.gradient_check_use_case import GradientCheckUseCase
from app.application.use_cases.selftest_use_case import SelfTestUseCase
from app.config.schemas import MODES, EnvConfig, ModelConfig, PlanConfig, SamplerConfig, TrainConfig
from app.config.settings import Config
from app.domain.exceptions import CliUsageError
from app.infrastructure.di.service_container import ServiceContainer
from app.infrastructure.factories.rollout_factory import POLICIES, RolloutFactory
from app.infrastructure.repositories import checkpoint_repository, episode_repository
from app.middleware.error_handler import EXIT_FAILURE, EXIT_OK, handle_exception
from app.utils.image_io import read_metrics_csv, write_metrics_csv, write_run_header


logger = logging.getLogger(__name__)

COMMANDS = ("gen-data", "train", "eval", "plan", "ablate-reverse", "correlate", "gradcheck", "selftest")


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting on bad input."""

    def error(self, message: str):
        raise CliUsageError(f"{self.prog}: {message}")


def _add_sampler_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ddim-steps", type=int, default=20, help="DDIM sub-steps (default 20)")
    parser.add_argument("--sampler", choices=("ddim", "ddpm"), default="ddim", help="reverse-process sampler")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="flowdreamer", description="Flow-conditioned RGB-D world model toolkit")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=_ArgumentParser)
    commands.required = True

    gen = commands.add_parser("gen-data", help="generate a push-world dataset")
    gen.add_argument("--episodes", type=int, default=200)
    gen.add_argument("--steps", type=int, default=20, help="actions per episode")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--blocks", type=int, default=2)
    gen.add_argument("--rotation", action="store_true", help="random block yaw and rotating pushes")
    gen.add_argument("--out", type=Path, default=Path("data"))

    train = commands.add_parser("train", help="train a world model")
    train.add_argument("--mode", choices=MODES, default="flowdreamer")
    train.add_argument("--alpha", type=float, default=None, help="flow loss weight (default 1.0)")
    train.add_argument("--steps", type=int, default=5000)
    train.add_argument("--batch", type=int, default=16)
    train.add_argument("--lr", type=float, default=1e-4)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--dataset", type=Path, default=Path("data"))
    train.add_argument("--checkpoint", type=Path, default=None, help="resume from this checkpoint")
    train.add_argument("--out", type=Path, default=Path("runs/train"))
    train.add_argument("--conditioning", choices=("cross_attention", "film"), default="cross_attention")
    train.add_argument("--dtype", choices=("float32", "float64"), default=None, help="default FD_DEFAULT_DTYPE")
    train.add_argument("--log-every", type=int, default=100)
    train.add_argument("--checkpoint-every", type=int, default=1000)

    evaluate = commands.add_parser("eval", help="full-trajectory video prediction metrics")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--dataset", type=Path, default=Path("data"))
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--num-seeds", type=int, default=1)
    evaluate.add_argument("--panels", type=int, default=2, help="trajectories rendered as PPM panels")
    evaluate.add_argument("--out", type=Path, default=Path("runs/eval"))
    _add_sampler_flags(evaluate)

    plan = commands.add_parser("plan", help="visual MPC on seeded push tasks")
    plan.add_argument("--policy", choices=POLICIES, default="model")
    plan.add_argument("--checkpoint", type=Path, default=None)
    plan.add_argument("--episodes", type=int, default=20, help="tasks per seed")
    plan.add_argument("--horizon", type=int, default=5)
    plan.add_argument("--population", type=int, default=64)
    plan.add_argument("--elites", type=int, default=8)
    plan.add_argument("--iterations", type=int, default=4)
    plan.add_argument("--cost", choices=("final", "summed"), default="final")
    plan.add_argument("--max-steps", type=int, default=30)
    plan.add_argument("--seed", type=int, default=0)
    plan.add_argument("--num-seeds", type=int, default=4)
    plan.add_argument("--dump-frames", action="store_true")
    plan.add_argument("--out", type=Path, default=Path("runs/plan"))
    _add_sampler_flags(plan)

    ablate = commands.add_parser("ablate-reverse", help="predict with the flow reversed")
    ablate.add_argument("--checkpoint", type=Path, required=True)
    ablate.add_argument("--dataset", type=Path, default=Path("data"))
    ablate.add_argument("--seed", type=int, default=0)
    ablate.add_argument("--out", type=Path, default=Path("runs/ablate"))
    _add_sampler_flags(ablate)

    correlate = commands.add_parser("correlate", help="correlate flow error with image quality")
    correlate.add_argument("--checkpoint", type=Path, default=None)
    correlate.add_argument("--dataset", type=Path, default=Path("data"))
    correlate.add_argument("--metrics", type=Path, default=None, help="use an existing one-step metrics CSV")
    correlate.add_argument("--seed", type=int, default=0)
    correlate.add_argument("--out", type=Path, default=Path("runs/correlate"))
    _add_sampler_flags(correlate)

    gradcheck = commands.add_parser("gradcheck", help="finite-difference gradient check")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--out", type=Path, default=Path("runs/gradcheck"))

    selftest = commands.add_parser("selftest", help="closed-form checks of every module")
    selftest.add_argument("--out", type=Path, default=Path("runs/selftest"))
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    """
    Parse a command line.

    Raises:
        CliUsageError: Unknown flag (token echoed), missing command or bad value
    """
    args, unknown = build_parser().parse_known_args(list(argv))
    if unknown:
        raise CliUsageError(f"unrecognized argument: {unknown[0]}", token=unknown[0])
    return args


def _sampler(args: argparse.Namespace) -> SamplerConfig:
    return SamplerConfig(sampler=args.sampler, ddim_steps=args.ddim_steps)


def _header(args: argparse.Namespace, argv: Sequence[str], **extra) -> None:
    header = {
        "command": args.command,
        "argv": list(argv),
        "arguments": {key: str(value) for key, value in vars(args).items()},
        "dataset_format_version": episode_repository.FORMAT_VERSION,
        "checkpoint_format_version": checkpoint_repository.FORMAT_VERSION,
    }
    header.update(extra)
    write_run_header(args.out, header)


def _load_model(path: Path):
    return ServiceContainer().get_training_service().load_model(path)


def run_gen_data(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = EnvConfig(seed=args.seed, n_blocks=args.blocks, rotation=args.rotation)
    _header(args, argv, env_config_hash=config.config_hash().hex(), seed=args.seed)
    summary = ServiceContainer().get_dataset_service().generate(config, args.episodes, args.steps, args.out, args.seed)
    logger.info(f"gen-data wrote {summary.episodes} episodes to {summary.out_dir}")
    return EXIT_OK


def train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    """Build the TrainConfig of a `train` command; unset --dtype falls back to FD_DEFAULT_DTYPE."""
    model = ModelConfig(
        mode=args.mode,
        action_conditioning=args.conditioning,
        dtype=args.dtype or Config.DEFAULT_DTYPE,
    )
    optional = {} if args.alpha is None else {"alpha": args.alpha}
    return TrainConfig(
        mode=args.mode,
        steps=args.steps,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        dataset_dir=args.dataset,
        out_dir=args.out,
        log_every=args.log_every,
        checkpoint_every=args.checkpoint_every,
        model=model,
        **optional,
    )


def run_train(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = train_config_from_args(args)
    _header(args, argv, train_config=config.model_dump(mode="json"), train_config_hash=config.config_hash().hex())
    result = ServiceContainer().get_training_service().train(config, resume_from=args.checkpoint)
    logger.info(f"train finished; checkpoint {result.checkpoint_path}")
    return EXIT_OK


def run_eval(args: argparse.Namespace, argv: Sequence[str]) -> int:
    model = _load_model(args.checkpoint)
    _header(args, argv, model_config_hash=model.config.config_hash().hex())
    service = ServiceContainer().get_evaluation_service(model, _sampler(args))
    trajectories = service.test_trajectories(args.dataset)
    seeds = [args.seed + i for i in range(args.num_seeds)]
    service.eval_video_prediction(trajectories, seeds, out_dir=args.out, panels=args.panels)
    if model.uses_flow:
        write_metrics_csv(args.out / "one_step.csv", service.one_step_rows(trajectories, args.seed))
    return EXIT_OK


def run_plan(args: argparse.Namespace, argv: Sequence[str]) -> int:
    if args.policy == "model" and args.checkpoint is None:
        raise CliUsageError("plan --policy model requires --checkpoint", token="--checkpoint")
    env_config = EnvConfig(n_blocks=1)
    plan_config = PlanConfig(
        horizon=args.horizon,
        population=args.population,
        elites=args.elites,
        iterations=args.iterations,
        cost_aggregation=args.cost,
        max_steps=args.max_steps,
    )
    model = _load_model(args.checkpoint) if args.policy == "model" else None
    _header(args, argv, plan_config=plan_config.model_dump(mode="json"), env_config_hash=env_config.config_hash().hex())

    def factory():
        return RolloutFactory.create_rollout_model(args.policy, env_config, model, _sampler(args))

    seeds = [args.seed + i for i in range(args.num_seeds)]
    PlanningService(env_config, plan_config).run(
        None if args.policy == "random" else factory,
        seeds,
        args.episodes,
        task_seed=args.seed,
        out_dir=args.out,
        dump_frames=args.dump_frames,
    )
    return EXIT_OK


def run_ablate_reverse(args: argparse.Namespace, argv: Sequence[str]) -> int:
    model = _load_model(args.checkpoint)
    _header(args, argv, model_config_hash=model.config.config_hash().hex())
    service = ServiceContainer().get_evaluation_service(model, _sampler(args))
    service.reverse_flow_ablation(service.test_trajectories(args.dataset), args.seed, out_dir=args.out)
    return EXIT_OK


def run_correlate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    if args.metrics is None and args.checkpoint is None:
        raise CliUsageError("correlate needs --metrics or --checkpoint", token="--metrics")
    _header(args, argv)
    if args.metrics is not None:
        rows = read_metrics_csv(args.metrics)
    else:
        service = ServiceContainer().get_evaluation_service(_load_model(args.checkpoint), _sampler(args))
        rows = service.one_step_rows(service.test_trajectories(args.dataset), args.seed)
        write_metrics_csv(args.out / "one_step.csv", rows)
    correlation_analysis(rows, out_dir=args.out)
    return EXIT_OK


def run_gradcheck(args: argparse.Namespace, argv: Sequence[str]) -> int:
    _header(args, argv, seed=args.seed)
    report = GradientCheckUseCase(seed=args.seed).execute()
    name, error = report.worst
    logger.info(f"gradcheck worst: {name} {error:.3e} (tolerance {report.tolerance:.0e})")
    return EXIT_OK if report.passed else EXIT_FAILURE


def run_selftest(args: argparse.Namespace, argv: Sequence[str]) -> int:
    _header(args, argv)
    report = SelfTestUseCase().execute()
    if not report.passed:
        logger.error(f"selftest failures: {', '.join(report.failures)}")
        return EXIT_FAILURE
    logger.info(f"selftest: all {len(report.results)} checks passed")
    return EXIT_OK


HANDLERS: Dict[str, Callable[[argparse.Namespace, Sequence[str]], int]] = {
    "gen-data": run_gen_data,
    "train": run_train,
    "eval": run_eval,
    "plan": run_plan,
    "ablate-reverse": run_ablate_reverse,
    "correlate": run_correlate,
    "gradcheck": run_gradcheck,
    "selftest": run_selftest,
}


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Run one command and return its exit code.

    0 on success, 1 on usage errors, 2 on data or checkpoint errors, 3 on
    any other failure.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return HANDLERS[args.command](args, argv)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        return handle_exception(CliUsageError(f"invalid value for {location}: {first['msg']}", token=location))
    except Exception as e:
        return handle_exception(e)

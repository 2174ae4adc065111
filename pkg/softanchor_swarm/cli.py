"""Command-line entry point.

Every subcommand writes its artifacts and a manifest under ``--out`` (default
``runs/<command>-seed<seed>``) and returns 0 on success, 1 when the membership
check finds a disagreement, 2 on a configuration error and 3 when the planner
exhausts its fail-safe budget.
"""

import argparse
import logging
import math
import sys
from collections.abc import Sequence
from pathlib import Path

from softanchor_swarm.configs import configs
from softanchor_swarm.configs.configs import (
    BENCH_HORIZONS,
    BENCH_ROBOT_COUNTS,
    COUPLE_TIMEOUT_S,
    DECOUPLE_TIMEOUT_S,
    DEFAULT_SEED,
)
from softanchor_swarm.configs.schema import load_scenario
from softanchor_swarm.exceptions import ConfigError, PairAssignmentError, SolverFailure
from softanchor_swarm.experiments import CouplingExperiment, DecouplingExperiment, Experiment, PipCheck, TimingBenchmark
from softanchor_swarm.items import StepRecord
from softanchor_swarm.pipelines import RunArtifactsPipeline
from softanchor_swarm.settings import configure_logging
from softanchor_swarm.sim.scenario import ScenarioRunner, TrajectoryLog

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DISAGREEMENT = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3


def parse_offsets(text: str) -> list[float]:
    """Parse ``start:stop:step`` (stop inclusive) or a comma-separated list of millimetres."""
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0.0 or stop < start:
                raise ValueError
            count = math.floor((stop - start) / step + 1e-9) + 1
            return [round(start + k * step, 9) for k in range(count)]
        values = [float(part) for part in text.split(",") if part.strip()]
        if not values:
            raise ValueError
        return values
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected start:stop:step or a comma list, got '{text}'") from e


def parse_int_list(text: str) -> list[int]:
    """Parse a comma-separated list of positive integers."""
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got '{text}'") from e
    if not values or any(value < 1 for value in values):
        raise argparse.ArgumentTypeError(f"expected positive integers, got '{text}'")
    return values


def positive_int(text: str) -> int:
    """Parse an integer of at least 1."""
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def seed_int(text: str) -> int:
    """Parse a non-negative seed."""
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative seed, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=seed_int, default=None, help=f"seed (default {DEFAULT_SEED}, or the config's)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="softanchor", description="Soft-anchor coupling swarm simulator and experiments.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="run a scenario file")
    simulate.add_argument("--config", type=Path, required=True, help="YAML scenario file")

    couple = commands.add_parser("couple-bench", parents=[common], help="coupling success rate against offset")
    couple.add_argument("--offsets", type=parse_offsets, default=parse_offsets("0:30:2"), help="mm, start:stop:step or a,b,c")
    couple.add_argument("--trials", type=positive_int, default=100)
    couple.add_argument("--timeout-s", type=float, default=COUPLE_TIMEOUT_S)
    couple.add_argument("--workers", type=positive_int, default=1)

    decouple = commands.add_parser("decouple-bench", parents=[common], help="wiggle decoupling success rate")
    decouple.add_argument("--trials", type=positive_int, default=100)
    decouple.add_argument("--timeout-s", type=float, default=DECOUPLE_TIMEOUT_S)
    decouple.add_argument("--workers", type=positive_int, default=1)

    timing = commands.add_parser("timing-bench", parents=[common], help="solve time against N and H_m")
    timing.add_argument("--robots", type=parse_int_list, default=list(BENCH_ROBOT_COUNTS))
    timing.add_argument("--horizons", type=parse_int_list, default=list(BENCH_HORIZONS))
    timing.add_argument("--repeats", type=positive_int, default=5)

    pip = commands.add_parser("pip-check", parents=[common], help="fuzz the membership test against ray casting")
    pip.add_argument("--samples", type=positive_int, default=10_000)
    return parser


def _output_dir(args: argparse.Namespace, seed: int) -> Path:
    return args.out if args.out is not None else configs.output_dir / f"{args.command}-seed{seed}"


def _log_summary(log: TrajectoryLog) -> dict[str, object]:
    result = log.trial_result()
    return {
        "scenario": log.name,
        "success": result.success,
        "completion_time_s": result.completion_time,
        "final_statuses": list(result.final_statuses),
        "phases": [
            {"kind": phase.kind, "started_s": phase.started_s, "ended_s": phase.ended_s, "success": phase.success}
            for phase in log.phases
        ],
        "events": [{"t": event.time, "pair": event.pair, "event": event.event, "detail": event.detail} for event in log.events],
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run one scenario file and write its trajectory, summary and manifest."""
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    try:
        cfg, digest = load_scenario(args.config, args.seed)
        runner = ScenarioRunner(cfg)
    except (ConfigError, PairAssignmentError) as e:
        logger.error("%s", e)
        return _config_error(args, seed, getattr(e, "errors", None) or [str(e)], str(args.config))

    pipeline = RunArtifactsPipeline(_output_dir(args, cfg.seed))
    pipeline.open_run(args.command, cfg.seed, str(args.config), digest, tables=(StepRecord,))
    pipeline.update_summary(holding_load_kg=cfg.sim.profile.holding_load_kg, robots=len(cfg.robots))
    status, code = "ok", EXIT_OK
    try:
        runner.run()
    except SolverFailure as e:
        logger.error("Scenario '%s' stopped: %s", cfg.name, e)
        status, code = "solver_failure", EXIT_SOLVER_FAILURE
    except Exception:
        logger.exception("Scenario '%s' crashed", cfg.name)
        status = "error"
        raise
    finally:
        for item in [*runner.log.steps, *runner.log.plans]:
            pipeline.process_item(item)
        pipeline.update_summary(**_log_summary(runner.log))
        pipeline.close_run(status)
    return code


def cmd_couple_bench(args: argparse.Namespace) -> int:
    """Coupling success rate and mean time per lateral offset."""
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    experiment = CouplingExperiment(args.offsets, args.trials, args.timeout_s, seed, args.workers)
    return _execute(experiment, args)


def cmd_decouple_bench(args: argparse.Namespace) -> int:
    """Wiggle decoupling success rate and mean time."""
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    experiment = DecouplingExperiment(args.trials, args.timeout_s, seed, args.workers)
    return _execute(experiment, args)


def cmd_timing_bench(args: argparse.Namespace) -> int:
    """Median solve time per robot count and horizon."""
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    try:
        experiment = TimingBenchmark(args.robots, args.horizons, args.repeats, seed)
    except ValueError as e:
        logger.error("%s", e)
        return _config_error(args, seed, [str(e)])
    return _execute(experiment, args)


def cmd_pip_check(args: argparse.Namespace) -> int:
    """Fuzz ``pip_residuals`` against ray casting; exit 1 on any disagreement."""
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    experiment = PipCheck(args.samples, seed)
    return _execute(experiment, args, samples=args.samples)


def _config_error(args: argparse.Namespace, seed: int, errors: list[str], config_path: str | None = None) -> int:
    pipeline = RunArtifactsPipeline(_output_dir(args, seed))
    pipeline.open_run(args.command, seed, config_path)
    pipeline.update_summary(errors=errors)
    pipeline.close_run("config_error")
    return EXIT_CONFIG_ERROR


def _execute(experiment: Experiment, args: argparse.Namespace, **summary: object) -> int:
    """Stream the experiment records through the pipeline and close the run."""
    pipeline = RunArtifactsPipeline(_output_dir(args, experiment.seed))
    pipeline.open_run(args.command, experiment.seed, config_hash=experiment.config_hash, tables=experiment.tables)
    pipeline.update_summary(experiment=experiment.name, **summary)
    items = []
    try:
        for item in experiment.run():
            items.append(pipeline.process_item(item))
    except SolverFailure as e:
        logger.error("%s stopped: %s", experiment.name, e)
        pipeline.close_run("solver_failure")
        return EXIT_SOLVER_FAILURE
    except Exception:
        logger.exception("%s crashed", experiment.name)
        pipeline.update_summary(results=len(items))
        pipeline.close_run("error")
        raise

    if isinstance(experiment, PipCheck):
        pipeline.update_summary(checked=experiment.checked, disagreements=len(items))
        if items:
            for item in items:
                logger.error(
                    "Disagreement at sample %d: point (%s, %s), residuals say %s, ray casting says %s, polygon %s",
                    item.sample,
                    item.px,
                    item.py,
                    item.residual_inside,
                    item.oracle_inside,
                    item.vertices,
                )
            pipeline.close_run("disagreement")
            return EXIT_DISAGREEMENT
    pipeline.update_summary(results=len(items))
    pipeline.close_run("ok")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "couple-bench": cmd_couple_bench,
    "decouple-bench": cmd_decouple_bench,
    "timing-bench": cmd_timing_bench,
    "pip-check": cmd_pip_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Parse the arguments, configure logging and dispatch.

    Args:
        argv (Sequence[str], optional): Arguments without the program name.

    Returns:
        int: Process exit code.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

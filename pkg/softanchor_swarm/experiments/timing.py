"""Planner solve time against the number of robots and the prediction horizon."""

import statistics
from collections.abc import Iterator, Sequence
from dataclasses import replace

import numpy as np
from numpy.typing import NDArray

from softanchor_swarm.configs.configs import BENCH_HORIZONS, BENCH_ROBOT_COUNTS, CONSTRAINT_HORIZON, DEFAULT_SEED
from softanchor_swarm.experiments.base import Experiment
from softanchor_swarm.geometry import RobotFootprint
from softanchor_swarm.items import TimingItem
from softanchor_swarm.mpc import BehaviorSpec, ConnectionPoint, MpcConfig, build_problem, solve

CHAIN_SPACING = 0.08
POSITION_JITTER = 0.005
HEADING_JITTER = 0.05


def chain_states(n_robots: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Robots in a loose column along -x with small seeded jitter, at rest."""
    states = np.zeros((n_robots, 5))
    states[:, 0] = -CHAIN_SPACING * np.arange(n_robots) + rng.uniform(-POSITION_JITTER, POSITION_JITTER, n_robots)
    states[:, 1] = rng.uniform(-POSITION_JITTER, POSITION_JITTER, n_robots)
    states[:, 2] = rng.uniform(-HEADING_JITTER, HEADING_JITTER, n_robots)
    return states


def chain_behavior(n_robots: int, footprint: RobotFootprint | None = None) -> BehaviorSpec:
    """Couple the back of robot k to the front of robot k+1 along the column."""
    footprint = footprint or RobotFootprint()
    back, front = footprint.connection_offset("back"), footprint.connection_offset("front")
    return BehaviorSpec.connect([(ConnectionPoint(k, back), ConnectionPoint(k + 1, front)) for k in range(n_robots - 1)])


class TimingBenchmark(Experiment):
    """Cold solves of the chain-coupling problem without inter-robot constraints."""

    name = "timing-bench"
    tables = (TimingItem,)

    def __init__(
        self,
        robot_counts: Sequence[int] = BENCH_ROBOT_COUNTS,
        horizons: Sequence[int] = BENCH_HORIZONS,
        repeats: int = 5,
        seed: int = DEFAULT_SEED,
        mpc: MpcConfig | None = None,
    ) -> None:
        """Describe the grid.

        Args:
            robot_counts (Sequence[int]): Values of N, each at least 2.
            horizons (Sequence[int]): Prediction horizons, each at least the constraint horizon.
            repeats (int): Solves timed per cell.
            seed (int): Seed of the initial jitter.
            mpc (MpcConfig, optional): Base planner configuration; its horizon is replaced per cell.
        """
        super().__init__(seed, workers=1)
        if repeats < 1:
            raise ValueError(f"repeats must be at least 1, got {repeats}")
        if any(count < 2 for count in robot_counts):
            raise ValueError(f"Every robot count must be at least 2, got {list(robot_counts)}")
        self.mpc = mpc or MpcConfig()
        self.constraint_horizon = min(CONSTRAINT_HORIZON, self.mpc.constraint_horizon)
        if any(horizon < self.constraint_horizon for horizon in horizons):
            raise ValueError(f"Every horizon must be at least {self.constraint_horizon}, got {list(horizons)}")
        self.robot_counts = list(robot_counts)
        self.horizons = list(horizons)
        self.repeats = repeats

    def run(self) -> Iterator[TimingItem]:
        """Yield one timing per (N, H_m), robot count outermost.

        Yields:
            TimingItem: Median wall-clock time and iterations of the cell.
        """
        for n_robots in self.robot_counts:
            behavior = chain_behavior(n_robots)
            for horizon in self.horizons:
                cfg = replace(self.mpc, prediction_horizon=horizon, constraint_horizon=self.constraint_horizon)
                times, iterations = [], []
                for repeat in range(self.repeats):
                    rng = np.random.default_rng([self.seed, n_robots, horizon, repeat])
                    solution = solve(build_problem(chain_states(n_robots, rng), behavior, (), cfg))
                    times.append(1e3 * solution.stats.wall_time_s)
                    iterations.append(solution.stats.iterations)
                item = TimingItem(
                    robots=n_robots,
                    horizon=horizon,
                    constraint_horizon=self.constraint_horizon,
                    repeats=self.repeats,
                    median_ms=statistics.median(times),
                    median_iterations=float(statistics.median(iterations)),
                )
                self.logger.info("N=%d H_m=%d: median %.1f ms, %.0f iterations", n_robots, horizon, item.median_ms, item.median_iterations)
                yield item


def run_timing_benchmark(
    robot_counts: Sequence[int] = BENCH_ROBOT_COUNTS,
    horizons: Sequence[int] = BENCH_HORIZONS,
    repeats: int = 5,
    seed: int = DEFAULT_SEED,
) -> list[TimingItem]:
    """Median solve time per robot count and horizon."""
    return list(TimingBenchmark(robot_counts, horizons, repeats, seed).run())

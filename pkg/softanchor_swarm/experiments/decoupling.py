"""Wiggle decoupling of a coupled pair."""

import statistics
from collections.abc import Iterator
from dataclasses import dataclass, field

from softanchor_swarm.configs.configs import DECOUPLE_TIMEOUT_S, DEFAULT_SEED
from softanchor_swarm.coordination import TargetConfiguration
from softanchor_swarm.dynamics import WiggleParams
from softanchor_swarm.experiments.base import Experiment
from softanchor_swarm.geometry import Pose2, RobotFootprint
from softanchor_swarm.items import DecouplingResultItem
from softanchor_swarm.sim.scenario import RobotSpec, ScenarioConfig, TrialResult, WigglePhase, run_scenario
from softanchor_swarm.sim.world import SimParams


@dataclass(frozen=True, kw_only=True)
class DecouplingTrial:
    """One decoupling attempt, picklable for worker processes."""

    trial: int
    seed: int
    timeout_s: float = DECOUPLE_TIMEOUT_S
    wiggle: WiggleParams = field(default_factory=WiggleParams)
    sim: SimParams = field(default_factory=SimParams)


def decoupling_scenario(job: DecouplingTrial) -> ScenarioConfig:
    """Two robots seated at the zero joint pose; robot 0 owns the anchor and wiggles."""
    footprint = RobotFootprint()
    spacing = footprint.connection_offset("front").x - footprint.connection_offset("back").x
    return ScenarioConfig(
        name=f"decouple-{job.trial}",
        robots=(
            RobotSpec(Pose2.from_xyt(spacing, 0.0, 0.0), pilot=True),
            RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),
        ),
        footprint=footprint,
        target=TargetConfiguration.line(2, footprint),
        start_coupled=True,
        phases=(WigglePhase(robots=(0,), params=job.wiggle, timeout_s=job.timeout_s),),
        sim=job.sim,
        seed=job.seed,
        noise_key=(job.trial,),
        record_steps=False,
    )


def run_decoupling_trial(job: DecouplingTrial) -> TrialResult:
    """Run one attempt; the wiggle is open loop so the planner never runs."""
    return run_scenario(decoupling_scenario(job)).trial_result()


class DecouplingExperiment(Experiment):
    """Repeated wiggle decoupling from the coupled state."""

    name = "decouple-bench"
    tables = (DecouplingResultItem,)

    def __init__(
        self,
        trials: int,
        timeout_s: float = DECOUPLE_TIMEOUT_S,
        seed: int = DEFAULT_SEED,
        workers: int = 1,
        wiggle: WiggleParams | None = None,
        sim: SimParams | None = None,
    ) -> None:
        """Describe the run.

        Args:
            trials (int): Attempts.
            timeout_s (float): Time allowed to decouple.
            seed (int): Base seed of the pose noise.
            workers (int): Worker processes.
            wiggle (WiggleParams, optional): Wiggle motion.
            sim (SimParams, optional): World parameters.
        """
        super().__init__(seed, workers)
        if trials < 1:
            raise ValueError(f"trials must be at least 1, got {trials}")
        self.trials = trials
        self.timeout_s = timeout_s
        self.wiggle = wiggle or WiggleParams()
        self.sim = sim or SimParams()

    def run(self) -> Iterator[DecouplingResultItem]:
        """Yield the single aggregate result.

        Yields:
            DecouplingResultItem: Success rate and mean decoupling time.
        """
        jobs = [
            DecouplingTrial(trial=trial, seed=self.seed, timeout_s=self.timeout_s, wiggle=self.wiggle, sim=self.sim)
            for trial in range(self.trials)
        ]
        results = self.run_trials(run_decoupling_trial, jobs)
        times = [result.completion_time for result in results if result.success]
        item = DecouplingResultItem(
            trials=self.trials,
            successes=len(times),
            success_rate=len(times) / self.trials,
            mean_time_s=statistics.fmean(times) if times else None,
            holding_load_kg=self.sim.profile.holding_load_kg,
        )
        self.logger.info("Decoupled %d/%d, mean %s s", item.successes, item.trials, item.mean_time_s)
        yield item


def run_decoupling_experiment(
    trials: int,
    seed: int = DEFAULT_SEED,
    timeout_s: float = DECOUPLE_TIMEOUT_S,
    workers: int = 1,
    wiggle: WiggleParams | None = None,
) -> DecouplingResultItem:
    """Success rate and mean decoupling time."""
    return next(DecouplingExperiment(trials, timeout_s, seed, workers, wiggle).run())

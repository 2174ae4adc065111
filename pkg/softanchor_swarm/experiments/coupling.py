"""Two-robot coupling success rate against the lateral offset."""

import statistics
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

from softanchor_swarm.configs.configs import COUPLE_TIMEOUT_S, DEFAULT_SEED, SEPARATION_MM, mm
from softanchor_swarm.coordination import TargetConfiguration
from softanchor_swarm.exceptions import SolverFailure
from softanchor_swarm.experiments.base import Experiment
from softanchor_swarm.geometry import Pose2
from softanchor_swarm.items import CouplingResultItem
from softanchor_swarm.mpc import MpcConfig
from softanchor_swarm.sim.scenario import AlignPhase, RobotSpec, ScenarioConfig, TrialResult, run_scenario
from softanchor_swarm.sim.world import SimParams


@dataclass(frozen=True, kw_only=True)
class CouplingTrial:
    """One coupling attempt, picklable for worker processes."""

    offset_mm: float
    trial: int
    seed: int
    timeout_s: float = COUPLE_TIMEOUT_S
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sim: SimParams = field(default_factory=SimParams)


def coupling_scenario(job: CouplingTrial) -> ScenarioConfig:
    """Robot 0 ahead by the nominal separation with a lateral offset, robot 1 at the origin.

    Robot 0 carries the anchor on its back face; robot 1 receives it in its
    front opening.
    """
    return ScenarioConfig(
        name=f"couple-{job.offset_mm:g}mm-{job.trial}",
        robots=(
            RobotSpec(Pose2.from_xyt(mm(SEPARATION_MM), mm(job.offset_mm), 0.0), pilot=True),
            RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),
        ),
        target=TargetConfiguration.line(2),
        phases=(AlignPhase(timeout_s=job.timeout_s),),
        mpc=job.mpc,
        sim=job.sim,
        seed=job.seed,
        noise_key=(round(1e3 * job.offset_mm), job.trial),
        record_steps=False,
    )


def run_coupling_trial(job: CouplingTrial) -> TrialResult:
    """Run one attempt; exhausting the planner fail-safe counts as a failure."""
    try:
        return run_scenario(coupling_scenario(job)).trial_result()
    except SolverFailure:
        return TrialResult(success=False, completion_time=job.timeout_s, solve_times=(), final_statuses=())


class CouplingExperiment(Experiment):
    """Repeated coupling attempts at every lateral offset."""

    name = "couple-bench"
    tables = (CouplingResultItem,)

    def __init__(
        self,
        offsets_mm: Sequence[float],
        trials: int,
        timeout_s: float = COUPLE_TIMEOUT_S,
        seed: int = DEFAULT_SEED,
        workers: int = 1,
        mpc: MpcConfig | None = None,
        sim: SimParams | None = None,
    ) -> None:
        """Describe the sweep.

        Args:
            offsets_mm (Sequence[float]): Lateral offsets to test.
            trials (int): Attempts per offset.
            timeout_s (float): Time allowed to couple.
            seed (int): Base seed of the pose noise.
            workers (int): Worker processes.
            mpc (MpcConfig, optional): Planner configuration.
            sim (SimParams, optional): World parameters.
        """
        super().__init__(seed, workers)
        if trials < 1:
            raise ValueError(f"trials must be at least 1, got {trials}")
        if not offsets_mm:
            raise ValueError("At least one offset is needed")
        self.offsets_mm = [float(offset) for offset in offsets_mm]
        self.trials = trials
        self.timeout_s = timeout_s
        self.mpc = mpc or MpcConfig()
        self.sim = sim or SimParams()

    def run(self) -> Iterator[CouplingResultItem]:
        """Yield one result per offset, in the given order.

        Yields:
            CouplingResultItem: Success rate and mean coupling time at one offset.
        """
        for offset in self.offsets_mm:
            jobs = [
                CouplingTrial(offset_mm=offset, trial=trial, seed=self.seed, timeout_s=self.timeout_s, mpc=self.mpc, sim=self.sim)
                for trial in range(self.trials)
            ]
            results = self.run_trials(run_coupling_trial, jobs)
            times = [result.completion_time for result in results if result.success]
            item = CouplingResultItem(
                offset_mm=offset,
                trials=self.trials,
                successes=len(times),
                success_rate=len(times) / self.trials,
                mean_time_s=statistics.fmean(times) if times else None,
            )
            self.logger.info(
                "Offset %.1f mm: %d/%d coupled, mean %s s",
                offset,
                item.successes,
                item.trials,
                "n/a" if item.mean_time_s is None else f"{item.mean_time_s:.2f}",
            )
            yield item


def run_coupling_experiment(
    offsets_mm: Sequence[float],
    trials: int,
    timeout_s: float = COUPLE_TIMEOUT_S,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> list[CouplingResultItem]:
    """Success rate and mean coupling time per offset."""
    return list(CouplingExperiment(offsets_mm, trials, timeout_s, seed, workers).run())

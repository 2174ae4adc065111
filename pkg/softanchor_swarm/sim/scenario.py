"""Behaviour schedules run against the simulated world.

A scenario places the robots (with seeded pose noise), assigns the goal pairs
of its target configuration and executes its phases in order. Planning runs
every ``plan_dt`` of simulated time with zero-order-hold controls in between;
the wiggle phase is open loop and updates every integration step.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from numpy.typing import NDArray

from softanchor_swarm.configs.configs import (
    COUPLE_TIMEOUT_S,
    DECOUPLE_TIMEOUT_S,
    DEFAULT_SEED,
    EPSILON_MM,
    HEADING_NOISE_RAD,
    POSE_NOISE_MM,
    mm,
)
from softanchor_swarm.coordination import PairAligner, PairRegistry, PairStatus, PairType, TargetConfiguration, update_pairs
from softanchor_swarm.dynamics import STATE_DIM, WiggleParams, acceleration_toward, wiggle_command
from softanchor_swarm.geometry import Pose2, RobotFootprint
from softanchor_swarm.items import PlanRecord, StepRecord
from softanchor_swarm.mpc import BehaviorSpec, MpcConfig, MpcPlanner, PlanStep
from softanchor_swarm.sim.world import SimParams, World, WorldEvent, step_world

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobotSpec:
    """Initial pose and role of one robot."""

    pose: Pose2
    pilot: bool = False


@dataclass(frozen=True, kw_only=True)
class AlignPhase:
    """Couple every goal pair of the target, or give up after ``timeout_s``."""

    kind: ClassVar[str] = "align"
    timeout_s: float = COUPLE_TIMEOUT_S


@dataclass(frozen=True, kw_only=True)
class GotoPhase:
    """Drive robots to goal positions while keeping the coupled pairs together.

    Attributes:
        goals (Mapping[int, tuple[float, float]]): Goal position per robot, metres.
        duration_s (float): Time budget of the phase.
        tolerance (float): Distance at which a goal counts as reached, metres.
    """

    kind: ClassVar[str] = "goto"
    goals: Mapping[int, tuple[float, float]]
    duration_s: float
    tolerance: float = mm(EPSILON_MM)


@dataclass(frozen=True, kw_only=True)
class VelocityPhase:
    """Track body velocities for a fixed duration while keeping the coupled pairs together."""

    kind: ClassVar[str] = "velocity"
    velocities: Mapping[int, tuple[float, float]]
    duration_s: float


@dataclass(frozen=True, kw_only=True)
class WigglePhase:
    """Open-loop wiggle of some robots; the others brake.

    The phase succeeds once every pair touching a wiggling robot is released.
    """

    kind: ClassVar[str] = "wiggle"
    robots: tuple[int, ...]
    params: WiggleParams = field(default_factory=WiggleParams)
    timeout_s: float = DECOUPLE_TIMEOUT_S


Phase = AlignPhase | GotoPhase | VelocityPhase | WigglePhase


@dataclass(frozen=True, kw_only=True)
class ScenarioConfig:  # pylint: disable=too-many-instance-attributes
    """Everything needed to run one scenario, in SI units.

    Attributes:
        name (str): Scenario name used in logs and artifacts.
        robots (tuple[RobotSpec, ...]): Initial poses and roles.
        footprint (RobotFootprint): Shared robot footprint.
        target (TargetConfiguration | None): Formation whose couplings become the goal pairs.
        start_coupled (bool): Seat every goal pair before the first phase.
        phases (tuple[Phase, ...]): Behaviour schedule.
        mpc (MpcConfig): Planner configuration.
        sim (SimParams): World parameters.
        seed (int): Seed of the pose noise.
        pose_noise (float): Half-width of the uniform position noise, metres.
        heading_noise (float): Half-width of the uniform heading noise, radians.
        noise_key (tuple[int, ...]): Extra entropy mixed into the seed (trial coordinates).
        record_steps (bool): Keep one record per robot per integration step.
    """

    name: str = "scenario"
    robots: tuple[RobotSpec, ...]
    footprint: RobotFootprint = field(default_factory=RobotFootprint)
    target: TargetConfiguration | None = None
    start_coupled: bool = False
    phases: tuple[Phase, ...] = ()
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sim: SimParams = field(default_factory=SimParams)
    seed: int = DEFAULT_SEED
    pose_noise: float = mm(POSE_NOISE_MM)
    heading_noise: float = HEADING_NOISE_RAD
    noise_key: tuple[int, ...] = ()
    record_steps: bool = True

    def __post_init__(self) -> None:
        """Check robot references and that coupling phases have a target."""
        n_robots = len(self.robots)
        if n_robots < 1:
            raise ValueError("A scenario needs at least one robot")
        if self.seed < 0 or any(key < 0 for key in self.noise_key):
            raise ValueError(f"seed and noise_key must be non-negative, got {self.seed}, {self.noise_key}")
        if self.pose_noise < 0.0 or self.heading_noise < 0.0:
            raise ValueError("Noise amplitudes must be non-negative")
        if self.target is None and (self.start_coupled or any(isinstance(phase, AlignPhase) for phase in self.phases)):
            raise ValueError(f"Scenario '{self.name}' couples robots but has no target configuration")
        for phase in self.phases:
            referenced = _phase_robots(phase)
            if any(not 0 <= robot < n_robots for robot in referenced):
                raise ValueError(f"{phase.kind} phase references robots {sorted(referenced)} outside 0..{n_robots - 1}")


def _phase_robots(phase: Phase) -> set[int]:
    match phase:
        case GotoPhase():
            return set(phase.goals)
        case VelocityPhase():
            return set(phase.velocities)
        case WigglePhase():
            return set(phase.robots)
    return set()


@dataclass(frozen=True)
class PhaseResult:
    """How one phase of the schedule ended."""

    kind: str
    started_s: float
    ended_s: float
    success: bool


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one scenario run seen as a trial.

    Attributes:
        success (bool): Whether every phase succeeded.
        completion_time (float): Time at which the last phase ended, seconds.
        solve_times (tuple[float, ...]): Wall-clock time of every solve.
        final_statuses (tuple[str, ...]): Status of every goal pair at the end.
    """

    success: bool
    completion_time: float
    solve_times: tuple[float, ...]
    final_statuses: tuple[str, ...]


@dataclass(kw_only=True, eq=False)
class TrajectoryLog:
    """Everything recorded while running a scenario."""

    name: str
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    plans: list[PlanRecord] = field(default_factory=list)
    events: list[WorldEvent] = field(default_factory=list)
    phases: list[PhaseResult] = field(default_factory=list)
    final_statuses: tuple[str, ...] = ()
    final_states: NDArray[np.float64] | None = None
    solve_times: list[float] = field(default_factory=list)

    @property
    def end_time(self) -> float:
        """Simulated time at the end of the run."""
        return self.phases[-1].ended_s if self.phases else 0.0

    def trial_result(self) -> TrialResult:
        """Summarize the run as a trial."""
        return TrialResult(
            success=all(phase.success for phase in self.phases),
            completion_time=self.end_time,
            solve_times=tuple(self.solve_times),
            final_statuses=self.final_statuses,
        )


def initial_states(cfg: ScenarioConfig) -> NDArray[np.float64]:
    """Initial ``(N, 5)`` states with the seeded uniform pose noise applied."""
    rng = np.random.default_rng([cfg.seed, *cfg.noise_key])
    states = np.zeros((len(cfg.robots), STATE_DIM))
    for robot, spec in enumerate(cfg.robots):
        dx, dy = rng.uniform(-cfg.pose_noise, cfg.pose_noise, size=2)
        dtheta = rng.uniform(-cfg.heading_noise, cfg.heading_noise)
        states[robot, :3] = spec.pose.position.x + dx, spec.pose.position.y + dy, spec.pose.heading + dtheta
    return states


class ScenarioRunner:
    """Runs the schedule of one scenario against its own world and planner."""

    def __init__(self, cfg: ScenarioConfig) -> None:
        """Build the world, the planner and the goal pairs.

        Args:
            cfg (ScenarioConfig): Scenario to run.
        """
        self.cfg = cfg
        self.planner = MpcPlanner(cfg.mpc)
        states = initial_states(cfg)
        self.aligner = None
        registry = PairRegistry(epsilon=cfg.mpc.epsilon)
        if cfg.target is not None:
            self.aligner = PairAligner(cfg.target, self.planner, cfg.footprint)
            registry = self.aligner.ensure_registry(states)
        self.world = World(
            states=states,
            footprint=cfg.footprint,
            pilots=tuple(spec.pilot for spec in cfg.robots),
            registry=registry,
            params=cfg.sim,
        )
        if cfg.start_coupled:
            self._start_coupled()
        self.log = TrajectoryLog(name=cfg.name, seed=cfg.seed)

    def _start_coupled(self) -> None:
        registry = self.world.registry
        for pair in registry.goal:
            if pair.pair_type == PairType.ANCHOR:
                self.world.seat(pair.index)
                continue
            pair.advance(PairStatus.HEAD_ALIGNED)
            pair.advance(PairStatus.HEAD_INSERTED)
            registry.connect(pair.index)
        logger.info("Scenario '%s' starts with %d pair(s) coupled", self.cfg.name, len(registry.connected))

    def _statuses(self) -> str:
        return ";".join(f"{pair.index}:{pair.status}" for pair in self.world.registry.goal)

    def _record(self, controls: NDArray[np.float64]) -> None:
        if not self.cfg.record_steps:
            return
        world = self.world
        statuses = self._statuses()
        for robot in range(world.n_robots):
            px, py, theta, v, w = (float(value) for value in world.states[robot])
            self.log.steps.append(
                StepRecord(
                    t=round(world.time, 9),
                    robot=robot,
                    pilot=world.pilots[robot],
                    px=px,
                    py=py,
                    theta=theta,
                    v=v,
                    w=w,
                    v_dot=float(controls[robot, 0]),
                    w_dot=float(controls[robot, 1]),
                    pair_statuses=statuses,
                )
            )

    def _record_plan(self, phase: str, step: PlanStep) -> None:
        stats = step.solution.stats
        self.log.solve_times.append(stats.wall_time_s)
        self.log.plans.append(
            PlanRecord(
                t=round(self.world.time, 9),
                phase=phase,
                iterations=stats.iterations,
                kkt_residual=stats.kkt_residual,
                objective=stats.objective,
                converged=stats.converged,
                failsafe=step.failsafe,
                solve_time_ms=1e3 * stats.wall_time_s,
            )
        )

    def _advance(self, controls: NDArray[np.float64]) -> None:
        step_world(self.world, controls)
        update_pairs(self.world.registry, self.world.states, self.world.footprint)
        self._record(controls)

    def _maintained_step(self, behavior: BehaviorSpec) -> PlanStep:
        if self.aligner is None:
            return self.planner.receding_horizon_step(self.world.states, behavior)
        constraints, keys = self.aligner.maintenance()
        return self.planner.receding_horizon_step(self.world.states, behavior, constraints, keys)

    def _planned_phase(self, phase: Phase, budget_s: float) -> bool:
        """Run a planner-driven phase; returns whether it succeeded."""
        n_steps = max(1, round(budget_s / self.world.params.sim_dt))
        per_plan = self.world.params.steps_per_plan
        controls = np.zeros((self.world.n_robots, 2))
        for step in range(n_steps):
            if self._phase_done(phase):
                return True
            if step % per_plan == 0:
                plan = self._plan(phase)
                self._record_plan(phase.kind, plan)
                controls = plan.controls
            self._advance(controls)
        return self._phase_done(phase) or isinstance(phase, VelocityPhase)

    def _plan(self, phase: Phase) -> PlanStep:
        match phase:
            case AlignPhase():
                return self.aligner.align_connection_pairs(self.world.states)
            case GotoPhase():
                return self._maintained_step(BehaviorSpec.goto(phase.goals))
            case VelocityPhase():
                return self._maintained_step(BehaviorSpec.velocity(phase.velocities))
        raise TypeError(f"{phase.kind} phase is not planner-driven")

    def _phase_done(self, phase: Phase) -> bool:
        match phase:
            case AlignPhase():
                return self.world.registry.all_connected
            case GotoPhase():
                return all(
                    math.dist(self.world.states[robot, :2], goal) <= phase.tolerance for robot, goal in phase.goals.items()
                )
            case WigglePhase():
                robots = set(phase.robots)
                return not any(robots & set(pair.robots) for pair in self.world.registry.connected_pairs())
        return False

    def _wiggle_phase(self, phase: WigglePhase) -> bool:
        world = self.world
        params = world.params
        n_steps = max(1, round(phase.timeout_s / params.sim_dt))
        wiggling = set(phase.robots)
        for step in range(n_steps):
            if self._phase_done(phase):
                return True
            # command the velocity due at the end of the step
            command = wiggle_command((step + 1) * params.sim_dt, phase.params)
            targets = [command if robot in wiggling else (0.0, 0.0) for robot in range(world.n_robots)]
            controls = np.array(
                [
                    acceleration_toward(world.states[robot], v, w, params.sim_dt, params.limits)
                    for robot, (v, w) in enumerate(targets)
                ]
            )
            self._advance(controls)
        return self._phase_done(phase)

    def run(self) -> TrajectoryLog:
        """Execute the schedule.

        Returns:
            TrajectoryLog: Steps, plans, events and the outcome of every phase.

        Raises:
            SolverFailure: When the planner exhausts its fail-safe budget.
        """
        cfg, world = self.cfg, self.world
        self._record(np.zeros((world.n_robots, 2)))
        try:
            for phase in cfg.phases:
                started = world.time
                self.planner.reset()
                logger.info("Scenario '%s': %s phase at t=%.2f s", cfg.name, phase.kind, started)
                match phase:
                    case WigglePhase():
                        success = self._wiggle_phase(phase)
                    case AlignPhase():
                        success = self._planned_phase(phase, phase.timeout_s)
                    case _:
                        success = self._planned_phase(phase, phase.duration_s)
                self.log.phases.append(PhaseResult(phase.kind, round(started, 9), round(world.time, 9), success))
                logger.info(
                    "Scenario '%s': %s phase %s at t=%.2f s",
                    cfg.name,
                    phase.kind,
                    "succeeded" if success else "failed",
                    world.time,
                )
        finally:
            self.log.events = list(world.events)
            self.log.final_statuses = tuple(str(pair.status) for pair in world.registry.goal)
            self.log.final_states = world.states.copy()
        return self.log


def run_scenario(cfg: ScenarioConfig) -> TrajectoryLog:
    """Run a scenario from its configuration.

    Args:
        cfg (ScenarioConfig): Validated scenario.

    Returns:
        TrajectoryLog: Everything recorded during the run.
    """
    return ScenarioRunner(cfg).run()

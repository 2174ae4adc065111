"""Receding-horizon loop: warm start, soft start and the fail-safe hold."""

import logging
from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.dynamics import CONTROL_DIM, unicycle_rhs
from softanchor_swarm.exceptions import SolverFailure
from softanchor_swarm.mpc.costs import BehaviorSpec
from softanchor_swarm.mpc.problem import MaintenanceConstraint, MpcConfig, MpcProblem, build_problem
from softanchor_swarm.mpc.solver import MpcSolution, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PlanStep:
    """Outcome of one planning instant.

    Attributes:
        controls (NDArray): ``(N, 2)`` command to apply until the next plan.
        solution (MpcSolution): The solve behind it.
        failsafe (bool): Whether the command is the decayed previous command.
        consecutive_failures (int): Failed solves in a row, this one included.
        relaxations (tuple[float, ...]): Soft-start relaxation applied to each constraint.
    """

    controls: NDArray[np.float64]
    solution: MpcSolution
    failsafe: bool
    consecutive_failures: int
    relaxations: tuple[float, ...] = ()

    @property
    def solve_time_s(self) -> float:
        """Wall-clock time of the solve."""
        return self.solution.stats.wall_time_s


class MpcPlanner:
    """Stateful planner owning the warm start and the failure bookkeeping."""

    def __init__(self, cfg: MpcConfig | None = None) -> None:
        """Start cold.

        Args:
            cfg (MpcConfig, optional): Planner configuration.
        """
        self.cfg = cfg or MpcConfig()
        self.previous: MpcSolution | None = None
        self.last_command: NDArray[np.float64] | None = None
        self.consecutive_failures = 0
        self.solve_times: list[float] = []
        self._soft_start: dict[Hashable, list[float]] = {}

    def reset(self) -> None:
        """Forget the warm start, the held command and the soft-start schedule."""
        self.previous = None
        self.last_command = None
        self.consecutive_failures = 0
        self._soft_start.clear()

    def warm_start(self, problem: MpcProblem) -> NDArray[np.float64] | None:
        """Previous controls shifted one step, last step repeated, rolled out from ``x0``."""
        if self.previous is None or self.previous.controls.shape != (problem.horizon, problem.n_robots, CONTROL_DIM):
            return None
        controls = self.previous.controls
        shifted = np.concatenate([controls[1:], controls[-1:]], axis=0)
        return problem.guess_from_controls(shifted)

    def _relax(
        self, states: NDArray[np.float64], maintenance: Sequence[MaintenanceConstraint], keys: Sequence[Hashable]
    ) -> list[MaintenanceConstraint]:
        limit = 2.0 * self.cfg.epsilon
        next_states = states + unicycle_rhs(states, np.zeros((len(states), CONTROL_DIM))) * self.cfg.dt
        relaxed = []
        for key, constraint in zip(keys, maintenance):
            measured = max(constraint.violation(states), constraint.violation(next_states))
            entry = self._soft_start.get(key)
            if entry is None and 0.0 < measured <= limit:
                entry = self._soft_start[key] = [measured, 0.0]
                logger.info("Soft-starting pair %s, entering violation %.2f mm", key, 1e3 * measured)
            elif entry is None and measured > limit:
                logger.warning("Pair %s violates its constraint by %.2f mm, beyond soft-start range", key, 1e3 * measured)

            relax = 0.0
            if entry is not None:
                initial, used = entry
                remaining = max(0.0, 1.0 - used / max(1, self.cfg.soft_start_solves))
                relax = initial * remaining
                entry[1] += 1.0
                if remaining == 0.0 and measured <= 0.0:
                    del self._soft_start[key]
            relaxed.append(constraint.with_relax(relax))
        return relaxed

    def receding_horizon_step(
        self,
        states: ArrayLike,
        behavior: BehaviorSpec,
        maintenance: Sequence[MaintenanceConstraint] = (),
        keys: Sequence[Hashable] | None = None,
    ) -> PlanStep:
        """Plan once and return the first-step command.

        Args:
            states (ArrayLike): ``(N, 5)`` measured states.
            behavior (BehaviorSpec): Behaviour to pursue.
            maintenance (Sequence[MaintenanceConstraint]): Constraints of the connected pairs.
            keys (Sequence[Hashable], optional): Stable identity of each constraint for the soft start.

        Returns:
            PlanStep: Command and diagnostics.

        Raises:
            SolverFailure: After ``max_consecutive_failures`` failed solves in a row.
        """
        x0 = np.asarray(states, dtype=float)
        keys = list(range(len(maintenance))) if keys is None else list(keys)
        relaxed = self._relax(x0, maintenance, keys)
        problem = build_problem(x0, behavior, relaxed, self.cfg)
        solution = solve(problem, self.warm_start(problem))
        self.solve_times.append(solution.stats.wall_time_s)

        if solution.converged:
            self.consecutive_failures = 0
            self.previous = solution
            command = solution.first_controls
        else:
            self.consecutive_failures += 1
            self.previous = None
            held = self.last_command if self.last_command is not None else np.zeros((problem.n_robots, CONTROL_DIM))
            command = held * self.cfg.failsafe_decay
            logger.warning(
                "MPC solve not accepted (%s, kkt %.2e); holding decayed command, %d failure(s) in a row",
                solution.stats.message,
                solution.stats.kkt_residual,
                self.consecutive_failures,
            )
            if self.consecutive_failures >= self.cfg.max_consecutive_failures:
                raise SolverFailure(f"MPC failed {self.consecutive_failures} consecutive solves, last: {solution.stats.message}")

        self.last_command = command
        return PlanStep(
            controls=command,
            solution=solution,
            failsafe=not solution.converged,
            consecutive_failures=self.consecutive_failures,
            relaxations=tuple(constraint.relax for constraint in relaxed),
        )

"""SQP solve of one transcription.

scipy's SLSQP (quasi-Newton SQP with an l1 merit line search and active-set
least-squares subproblems) runs on the scaled objective with analytic
Jacobians. The returned point always satisfies the dynamics exactly: the
solver's controls are rolled out again from the measured state.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import OptimizeResult, lsq_linear, minimize

from softanchor_swarm.mpc.problem import MpcProblem

logger = logging.getLogger(__name__)

_ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class SolverStats:
    """Diagnostics of one solve.

    Attributes:
        iterations (int): SQP iterations.
        kkt_residual (float): Relative stationarity residual at the returned point.
        wall_time_s (float): Wall-clock time of the solve.
        objective (float): Unscaled objective at the returned point.
        dynamics_defect (float): Largest equality residual.
        violation (float): Largest inequality or bound violation.
        converged (bool): Whether the point is accepted.
        status (int): SLSQP exit mode.
        message (str): SLSQP exit message.
        fallback (str): ``""`` when the solver iterate was kept, else the guess used instead.
        restarts (int): SQP restarts spent on polishing.
    """

    iterations: int
    kkt_residual: float
    wall_time_s: float
    objective: float
    dynamics_defect: float
    violation: float
    converged: bool
    status: int
    message: str
    fallback: str = ""
    restarts: int = 0


@dataclass(frozen=True, eq=False)
class MpcSolution:
    """Predicted trajectory and inputs of one solve."""

    z: NDArray[np.float64]
    states: NDArray[np.float64]
    controls: NDArray[np.float64]
    stats: SolverStats

    @property
    def first_controls(self) -> NDArray[np.float64]:
        """``u(t|t)`` for every robot, shape ``(N, 2)``."""
        return self.controls[0].copy()

    @property
    def converged(self) -> bool:
        """Shortcut for ``stats.converged``."""
        return self.stats.converged


def kkt_residual(problem: MpcProblem, z: NDArray[np.float64], scale: float = 1.0) -> float:
    """Relative stationarity residual over the active set.

    Multipliers are fitted by least squares under their sign conditions: free
    for the equalities, non-negative for the active inequalities and lower
    bounds, non-positive for the active upper bounds. The residual is the
    unexplained part of the scaled objective gradient, relative to the state
    and control part of that gradient (the constant slack penalty is left out).
    """
    gradient = scale * problem.objective_gradient(z)
    columns = [problem.equality_jacobian(z)]
    lower = [np.full(problem.n_eq, -np.inf)]
    upper = [np.full(problem.n_eq, np.inf)]
    if problem.n_ineq:
        rows = problem.inequality_jacobian(z)[problem.inequality(z) <= _ACTIVE_TOL]
        columns.append(rows)
        lower.append(np.zeros(len(rows)))
        upper.append(np.full(len(rows), np.inf))
    bounds = problem.bounds()
    for active, lo, hi in (
        (np.flatnonzero(z - bounds.lb <= _ACTIVE_TOL), 0.0, np.inf),
        (np.flatnonzero(bounds.ub - z <= _ACTIVE_TOL), -np.inf, 0.0),
    ):
        unit = np.zeros((active.size, problem.n_vars))
        unit[np.arange(active.size), active] = 1.0
        columns.append(unit)
        lower.append(np.full(active.size, lo))
        upper.append(np.full(active.size, hi))

    matrix = np.vstack(columns).T
    lower, upper = np.concatenate(lower), np.concatenate(upper)
    multipliers = np.linalg.lstsq(matrix, gradient, rcond=None)[0]
    if np.any(multipliers < lower) or np.any(multipliers > upper):
        multipliers = lsq_linear(matrix, gradient, bounds=(lower, upper)).x
    residual = gradient - matrix @ multipliers
    reference = np.abs(gradient[: problem.n_state_vars + problem.n_control_vars])
    return float(np.max(np.abs(residual)) / max(1.0, float(np.max(reference))))


def _feasible(problem: MpcProblem, z: NDArray[np.float64]) -> bool:
    tol = problem.cfg.feasibility_tol
    return problem.inequality_violation(z) <= tol and problem.dynamics_defect(z) <= tol


def _slsqp(problem: MpcProblem, guess: NDArray[np.float64], constraints: list[dict]) -> OptimizeResult:
    cfg = problem.cfg
    scale = cfg.objective_scale
    return minimize(
        lambda z: scale * problem.objective(z),
        guess,
        jac=lambda z: scale * problem.objective_gradient(z),
        method="SLSQP",
        bounds=problem.bounds(),
        constraints=constraints,
        options={"maxiter": cfg.max_iterations, "ftol": cfg.ftol},
    )


def _rolled_out(problem: MpcProblem, z: NDArray[np.float64]) -> NDArray[np.float64]:
    _, controls, _ = problem.unpack(z)
    return problem.guess_from_controls(controls)


def solve(problem: MpcProblem, warm_start: NDArray[np.float64] | None = None) -> MpcSolution:
    """Solve the transcription and pick the best feasible point.

    SLSQP is restarted from its own rolled-out point, with a fresh Hessian
    estimate, while that point is feasible but not stationary, up to
    ``polish_restarts`` times. A point is accepted only when it is feasible
    and its KKT residual is within ``kkt_tol``.

    Args:
        problem (MpcProblem): Program to solve.
        warm_start (NDArray, optional): Decision vector whose controls seed the solve
            (typically the previous solution shifted one step).

    Returns:
        MpcSolution: The accepted point, or the best effort flagged non-converged.
    """
    cfg = problem.cfg
    scale = cfg.objective_scale
    start = time.perf_counter()

    zero_guess = problem.zero_control_guess()
    guesses = [("zero_control", zero_guess)]
    guess = zero_guess
    if warm_start is not None:
        guess = _rolled_out(problem, warm_start)
        guesses.insert(0, ("warm_start", guess))

    constraints = [{"type": "eq", "fun": problem.equality, "jac": problem.equality_jacobian}]
    if problem.n_ineq:
        constraints.append({"type": "ineq", "fun": problem.inequality, "jac": problem.inequality_jacobian})

    result = _slsqp(problem, guess, constraints)
    iterations = int(result.nit)
    solver_points = [_rolled_out(problem, result.x)]
    for _ in range(cfg.polish_restarts):
        latest = solver_points[-1]
        if _feasible(problem, latest) and kkt_residual(problem, latest, scale) <= cfg.kkt_tol:
            break
        result = _slsqp(problem, latest, constraints)
        iterations += int(result.nit)
        solver_points.append(_rolled_out(problem, result.x))
    restarts = len(solver_points) - 1

    # latest solver point first so that it wins ties
    candidates = [("", z) for z in reversed(solver_points)] + guesses
    best_label, best_z, best_objective = candidates[0][0], candidates[0][1], np.inf
    for label, z in candidates:
        if problem.inequality_violation(z) > cfg.feasibility_tol:
            continue
        objective = problem.objective(z)
        if objective < best_objective:
            best_label, best_z, best_objective = label, z, objective

    kkt = kkt_residual(problem, best_z, scale)
    converged = _feasible(problem, best_z) and kkt <= cfg.kkt_tol
    wall_time = time.perf_counter() - start

    states, controls, _ = problem.unpack(best_z)
    stats = SolverStats(
        iterations=iterations,
        kkt_residual=kkt,
        wall_time_s=wall_time,
        objective=float(problem.objective(best_z)),
        dynamics_defect=problem.dynamics_defect(best_z),
        violation=problem.inequality_violation(best_z),
        converged=converged,
        status=int(result.status),
        message=str(result.message),
        fallback=best_label,
        restarts=restarts,
    )
    logger.debug(
        "Solved N=%d H=%d in %d iterations and %d restart(s) (%.1f ms), kkt %.2e, converged=%s%s",
        problem.n_robots,
        problem.horizon,
        stats.iterations,
        restarts,
        1e3 * wall_time,
        kkt,
        converged,
        f", fallback={best_label}" if best_label else "",
    )
    return MpcSolution(z=best_z, states=states.copy(), controls=controls.copy(), stats=stats)

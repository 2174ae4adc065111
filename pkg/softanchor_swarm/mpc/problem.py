"""Direct transcription of the receding-horizon problem.

Decision vector layout, all robots stacked per time step::

    z = [ X (H+1, N, 5) | U (H, N, 2) | S (H, N) ]

``X`` are predicted states, ``U`` acceleration inputs and ``S`` the slack of
the smoothed butterfly constraint ``v^2 + m^2 - c^2 w^2 + s >= 0`` (absent when
the butterfly set is disabled). The standstill margin ``m = c * butterfly_rest_w``
keeps the rows inactive at ``v = w = 0``, where their gradient in ``(v, w)`` vanishes.
Inequalities follow the scipy convention ``g(z) >= 0``.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import Bounds

from softanchor_swarm.configs.configs import CONSTRAINT_HORIZON, DT, EPSILON_MM, PREDICTION_HORIZON, mm
from softanchor_swarm.dynamics import CONTROL_DIM, CONTROL_JACOBIAN, STATE_DIM, ActuationLimits, unicycle_rhs, unicycle_state_jacobian
from softanchor_swarm.exceptions import PairAssignmentError
from softanchor_swarm.geometry import Point2, transform_jacobian, transform_points
from softanchor_swarm.mpc.costs import BehaviorSpec, CostWeights, PairEndpoints, cost_connection, cost_connection_gradient


@dataclass(frozen=True, kw_only=True)
class MpcConfig:
    """Horizons, weights, limits and solver tolerances of the planner.

    Attributes:
        prediction_horizon (int): H_m, number of predicted steps.
        constraint_horizon (int): H_c, steps over which connected pairs are enforced.
        dt (float): Transcription step, seconds.
        weights (CostWeights): Objective weights.
        limits (ActuationLimits): Control box and velocity set.
        epsilon (float): Pair threshold, metres.
        kkt_tol (float): Relative stationarity tolerance accepted as converged.
        max_iterations (int): SQP iteration cap.
        ftol (float): SQP objective tolerance on the scaled objective.
        feasibility_tol (float): Tolerance on dynamics defects and constraint violation.
        objective_scale (float): Factor applied to the objective inside the solver.
        butterfly (bool): Enforce the smoothed butterfly set.
        butterfly_rest_w (float): Turn rate the smoothed butterfly rows allow at standstill, rad/s.
        soft_start_solves (int): Solves over which an entering violation is relaxed away.
        failsafe_decay (float): Factor applied to the held command after a failed solve.
        max_consecutive_failures (int): Failed solves tolerated before giving up.
        polish_restarts (int): SQP restarts from the returned point while the KKT residual is above tolerance.
    """

    prediction_horizon: int = PREDICTION_HORIZON
    constraint_horizon: int = CONSTRAINT_HORIZON
    dt: float = DT
    weights: CostWeights = CostWeights()
    limits: ActuationLimits = ActuationLimits()
    epsilon: float = mm(EPSILON_MM)
    kkt_tol: float = 1e-3
    max_iterations: int = 100
    ftol: float = 1e-8
    feasibility_tol: float = 1e-6
    objective_scale: float = 1e3
    butterfly: bool = True
    butterfly_rest_w: float = 0.2
    soft_start_solves: int = 5
    failsafe_decay: float = 0.5
    max_consecutive_failures: int = 10
    polish_restarts: int = 2

    def __post_init__(self) -> None:
        """Check horizons and tolerances."""
        if not 1 <= self.constraint_horizon <= self.prediction_horizon:
            raise ValueError(
                f"Need 1 <= H_c <= H_m, got H_c={self.constraint_horizon}, H_m={self.prediction_horizon}"
            )
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.epsilon < 0.0 or self.kkt_tol <= 0.0 or self.feasibility_tol <= 0.0:
            raise ValueError("epsilon must be non-negative and tolerances positive")
        if self.max_iterations < 1 or self.max_consecutive_failures < 1 or self.soft_start_solves < 0 or self.polish_restarts < 0:
            raise ValueError("iteration and failure budgets must be positive")
        if self.butterfly_rest_w <= 0.0:
            raise ValueError(f"butterfly_rest_w must be positive, got {self.butterfly_rest_w}")
        if not 0.0 <= self.failsafe_decay <= 1.0:
            raise ValueError(f"failsafe_decay must lie in [0, 1], got {self.failsafe_decay}")


@dataclass(frozen=True, kw_only=True, eq=False)
class MaintenanceConstraint:
    """Keeps a connected pair together over the constraint horizon.

    Anchor pairs keep the projected anchor zero position (the head) inside the
    opening triangle of the other robot; knob pairs keep the two connection
    points within ``epsilon`` of each other on both axes.

    Attributes:
        kind (str): ``anchor`` or ``knob``.
        endpoints (PairEndpoints): The pair's connection points, used by the maintenance cost.
        head_robot (int): Robot owning the anchor (anchor only).
        head_offset (Point2): Head position in the anchor robot frame (anchor only).
        opening_robot (int): Robot whose opening triangle contains the head (anchor only).
        opening_vertices (NDArray): ``(K, 2)`` CCW triangle in the opening robot's frame.
        epsilon (float): Knob tolerance, metres.
        relax (float): Soft-start outward offset of every row, metres.
    """

    kind: Literal["anchor", "knob"]
    endpoints: PairEndpoints
    head_robot: int = -1
    head_offset: Point2 = Point2(0.0, 0.0)
    opening_robot: int = -1
    opening_vertices: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    epsilon: float = 0.0
    relax: float = 0.0

    def __post_init__(self) -> None:
        """Check the kind-specific fields."""
        if self.kind == "anchor" and (self.head_robot < 0 or self.opening_robot < 0 or len(self.opening_vertices) < 3):
            raise ValueError("Anchor maintenance needs head_robot, opening_robot and a triangle")
        if self.kind not in ("anchor", "knob"):
            raise ValueError(f"Unknown maintenance kind '{self.kind}'")
        if self.relax < 0.0:
            raise ValueError(f"relax must be non-negative, got {self.relax}")

    @property
    def robots(self) -> tuple[int, ...]:
        """Robots referenced by the constraint."""
        indices = {point.robot_index for point in self.endpoints}
        if self.kind == "anchor":
            indices |= {self.head_robot, self.opening_robot}
        return tuple(sorted(indices))

    @property
    def n_rows(self) -> int:
        """Inequality rows per time step."""
        return len(self.opening_vertices) if self.kind == "anchor" else 4

    def with_relax(self, relax: float) -> "MaintenanceConstraint":
        """Copy with another soft-start relaxation."""
        return replace(self, relax=max(0.0, float(relax)))

    def _triangle(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        px, py, theta = states[self.opening_robot, :3]
        return transform_points(theta, (px, py), self.opening_vertices)

    def _head(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        px, py, theta = states[self.head_robot, :3]
        return transform_points(theta, (px, py), self.head_offset.as_array())[0]

    @property
    def edge_lengths(self) -> NDArray[np.float64]:
        """Lengths of the triangle edges (invariant under rigid motion)."""
        edges = np.roll(self.opening_vertices, -1, axis=0) - self.opening_vertices
        return np.hypot(edges[:, 0], edges[:, 1])

    def pip_residuals(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        """Point-in-polygon residuals of the head against the world triangle."""
        head = self._head(states)
        start = self._triangle(states)
        edges = np.roll(start, -1, axis=0) - start
        return edges[:, 1] * (head[0] - start[:, 0]) - edges[:, 0] * (head[1] - start[:, 1])

    def _knob_gap(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        first, second = self.endpoints
        return first.world(states) - second.world(states)

    def rows(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        """Constraint rows ``g >= 0`` at one time step."""
        if self.kind == "anchor":
            return self.relax * self.edge_lengths - self.pip_residuals(states)
        gap = self._knob_gap(states)
        bound = self.epsilon + self.relax
        return np.array([bound - gap[0], bound + gap[0], bound - gap[1], bound + gap[1]])

    def violation(self, states: NDArray[np.float64]) -> float:
        """Largest outward excursion in metres (non-positive when satisfied)."""
        if self.kind == "anchor":
            return float(np.max(self.pip_residuals(states) / self.edge_lengths))
        return float(np.max(np.abs(self._knob_gap(states))) - self.epsilon)

    def row_jacobian(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        """``d rows / d states`` with shape ``(n_rows, N, 5)``."""
        jac = np.zeros((self.n_rows, *states.shape))
        if self.kind == "knob":
            for sign, point in ((1.0, self.endpoints[0]), (-1.0, self.endpoints[1])):
                d_point = sign * transform_jacobian(states[point.robot_index, 2], point.offset.as_array())
                jac[0, point.robot_index, :3] -= d_point[0]
                jac[1, point.robot_index, :3] += d_point[0]
                jac[2, point.robot_index, :3] -= d_point[1]
                jac[3, point.robot_index, :3] += d_point[1]
            return jac

        head = self._head(states)
        start = self._triangle(states)
        end = np.roll(start, -1, axis=0)
        d_head = transform_jacobian(states[self.head_robot, 2], self.head_offset.as_array())
        theta_j = states[self.opening_robot, 2]
        count = len(self.opening_vertices)
        for k in range(count):
            a, b = start[k], end[k]
            d_r_d_head = np.array([b[1] - a[1], -(b[0] - a[0])])
            d_r_d_a = np.array([head[1] - b[1], b[0] - head[0]])
            d_r_d_b = np.array([-(head[1] - a[1]), head[0] - a[0]])
            d_a = transform_jacobian(theta_j, self.opening_vertices[k])
            d_b = transform_jacobian(theta_j, self.opening_vertices[(k + 1) % count])
            jac[k, self.head_robot, :3] -= d_r_d_head @ d_head
            jac[k, self.opening_robot, :3] -= d_r_d_a @ d_a + d_r_d_b @ d_b
        return jac


class MpcProblem:  # pylint: disable=too-many-instance-attributes
    """Nonlinear program for one planning instant."""

    def __init__(
        self,
        x0: ArrayLike,
        behavior: BehaviorSpec,
        maintenance: Sequence[MaintenanceConstraint],
        cfg: MpcConfig,
    ) -> None:
        """Lay out the decision vector.

        Args:
            x0 (ArrayLike): ``(N, 5)`` measured states.
            behavior (BehaviorSpec): Behaviour pursued by the solve.
            maintenance (Sequence[MaintenanceConstraint]): Constraints of the connected pairs.
            cfg (MpcConfig): Planner configuration.
        """
        self.x0 = np.array(x0, dtype=float).reshape(-1, STATE_DIM)
        self.behavior = behavior
        self.maintenance = tuple(maintenance)
        self.cfg = cfg
        self.n_robots = self.x0.shape[0]
        self.horizon = cfg.prediction_horizon
        self.constraint_horizon = cfg.constraint_horizon
        self.maintenance_pairs = tuple(constraint.endpoints for constraint in self.maintenance)

        self.n_state_vars = (self.horizon + 1) * self.n_robots * STATE_DIM
        self.n_control_vars = self.horizon * self.n_robots * CONTROL_DIM
        self.n_slack_vars = self.horizon * self.n_robots if cfg.butterfly else 0
        self.n_vars = self.n_state_vars + self.n_control_vars + self.n_slack_vars
        self.n_eq = self.n_state_vars
        self.n_pip_rows = self.constraint_horizon * sum(c.n_rows for c in self.maintenance if c.kind == "anchor")
        self.n_maintenance_rows = self.constraint_horizon * sum(c.n_rows for c in self.maintenance)
        self.n_butterfly_rows = self.n_slack_vars
        self.n_ineq = self.n_maintenance_rows + self.n_butterfly_rows
        self.butterfly_margin = (cfg.limits.butterfly_ratio * cfg.butterfly_rest_w) ** 2

    # layout

    def unpack(self, z: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Split ``z`` into ``X (H+1, N, 5)``, ``U (H, N, 2)`` and ``S (H, N)`` views."""
        z = np.asarray(z, dtype=float)
        states = z[: self.n_state_vars].reshape(self.horizon + 1, self.n_robots, STATE_DIM)
        controls = z[self.n_state_vars : self.n_state_vars + self.n_control_vars].reshape(
            self.horizon, self.n_robots, CONTROL_DIM
        )
        slack = z[self.n_state_vars + self.n_control_vars :].reshape(-1, self.n_robots)
        return states, controls, slack

    def pack(self, states: ArrayLike, controls: ArrayLike, slack: ArrayLike | None = None) -> NDArray[np.float64]:
        """Inverse of :meth:`unpack`."""
        parts = [np.asarray(states, dtype=float).ravel(), np.asarray(controls, dtype=float).ravel()]
        if self.n_slack_vars:
            parts.append(np.zeros(self.n_slack_vars) if slack is None else np.asarray(slack, dtype=float).ravel())
        return np.concatenate(parts)

    def _state_col(self, k: int, robot: int) -> int:
        return (k * self.n_robots + robot) * STATE_DIM

    def _control_col(self, k: int, robot: int) -> int:
        return self.n_state_vars + (k * self.n_robots + robot) * CONTROL_DIM

    def _slack_col(self, k: int, robot: int) -> int:
        return self.n_state_vars + self.n_control_vars + k * self.n_robots + robot

    # guesses

    def rollout(self, controls: ArrayLike) -> NDArray[np.float64]:
        """Exact Euler rollout of ``controls`` from ``x0`` (headings left unwrapped)."""
        controls = np.asarray(controls, dtype=float).reshape(self.horizon, self.n_robots, CONTROL_DIM)
        states = np.empty((self.horizon + 1, self.n_robots, STATE_DIM))
        states[0] = self.x0
        for k in range(self.horizon):
            states[k + 1] = states[k] + unicycle_rhs(states[k], controls[k]) * self.cfg.dt
        return states

    def minimal_slack(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        """Smallest butterfly slack making ``states[1:]`` feasible."""
        c = self.cfg.limits.butterfly_ratio
        v, w = states[1:, :, 3], states[1:, :, 4]
        return np.maximum(0.0, c * c * w * w - v * v - self.butterfly_margin)

    def guess_from_controls(self, controls: ArrayLike) -> NDArray[np.float64]:
        """Dynamically consistent decision vector for clipped ``controls``."""
        limits = self.cfg.limits
        clipped = np.clip(
            np.asarray(controls, dtype=float).reshape(self.horizon, self.n_robots, CONTROL_DIM),
            limits.u_lower,
            limits.u_upper,
        )
        states = self.rollout(clipped)
        return self.pack(states, clipped, self.minimal_slack(states) if self.n_slack_vars else None)

    def zero_control_guess(self) -> NDArray[np.float64]:
        """Decision vector of the zero-input rollout."""
        return self.guess_from_controls(np.zeros((self.horizon, self.n_robots, CONTROL_DIM)))

    # objective

    def objective(self, z: ArrayLike) -> float:
        """Unscaled objective: terminal, stage, maintenance, smoothness and slack terms."""
        states, controls, slack = self.unpack(z)
        weights = self.cfg.weights
        total = weights.w_f * self.behavior.cost(states[self.horizon], weights)
        for k in range(self.horizon):
            total += weights.w_m * self.behavior.cost(states[k], weights)
        if self.maintenance_pairs and weights.w_c > 0.0:
            for k in range(self.constraint_horizon + 1):
                total += weights.w_c * cost_connection(states[k], self.maintenance_pairs, weights)
        total += weights.w_s * float(np.sum(controls * controls))
        total += weights.w_b * float(np.sum(slack))
        return float(total)

    def objective_gradient(self, z: ArrayLike) -> NDArray[np.float64]:
        """Analytic gradient of :meth:`objective`."""
        states, controls, slack = self.unpack(z)
        weights = self.cfg.weights
        grad_states = np.zeros_like(states)
        grad_states[self.horizon] += weights.w_f * self.behavior.gradient(states[self.horizon], weights)
        for k in range(self.horizon):
            grad_states[k] += weights.w_m * self.behavior.gradient(states[k], weights)
        if self.maintenance_pairs and weights.w_c > 0.0:
            for k in range(self.constraint_horizon + 1):
                grad_states[k] += weights.w_c * cost_connection_gradient(states[k], self.maintenance_pairs, weights)
        grad_slack = np.full_like(slack, weights.w_b)
        return self.pack(grad_states, 2.0 * weights.w_s * controls, grad_slack)

    # equalities

    def equality(self, z: ArrayLike) -> NDArray[np.float64]:
        """Initial-state and Euler dynamics defects."""
        states, controls, _ = self.unpack(z)
        defects = states[1:] - states[:-1] - unicycle_rhs(states[:-1], controls) * self.cfg.dt
        return np.concatenate([(states[0] - self.x0).ravel(), defects.ravel()])

    def equality_jacobian(self, z: ArrayLike) -> NDArray[np.float64]:
        """Dense Jacobian of :meth:`equality`."""
        states, _, _ = self.unpack(z)
        dt = self.cfg.dt
        jac = np.zeros((self.n_eq, self.n_vars))
        eye = np.eye(STATE_DIM)
        jac[: self.n_robots * STATE_DIM, : self.n_robots * STATE_DIM] = np.eye(self.n_robots * STATE_DIM)
        for k in range(self.horizon):
            for robot in range(self.n_robots):
                row = self.n_robots * STATE_DIM + self._state_col(k, robot)
                rows = slice(row, row + STATE_DIM)
                nxt = self._state_col(k + 1, robot)
                cur = self._state_col(k, robot)
                ctl = self._control_col(k, robot)
                jac[rows, nxt : nxt + STATE_DIM] = eye
                jac[rows, cur : cur + STATE_DIM] = -eye - unicycle_state_jacobian(states[k, robot]) * dt
                jac[rows, ctl : ctl + CONTROL_DIM] = -CONTROL_JACOBIAN * dt
        return jac

    # inequalities

    def inequality(self, z: ArrayLike) -> NDArray[np.float64]:
        """Maintenance rows for ``k = 1..H_c`` followed by butterfly rows for ``k = 1..H_m``."""
        states, _, slack = self.unpack(z)
        rows = [constraint.rows(states[k]) for k in range(1, self.constraint_horizon + 1) for constraint in self.maintenance]
        if self.n_slack_vars:
            c = self.cfg.limits.butterfly_ratio
            v, w = states[1:, :, 3], states[1:, :, 4]
            rows.append((v * v + self.butterfly_margin - c * c * w * w + slack).ravel())
        return np.concatenate(rows) if rows else np.zeros(0)

    def inequality_jacobian(self, z: ArrayLike) -> NDArray[np.float64]:
        """Dense Jacobian of :meth:`inequality`."""
        states, _, _ = self.unpack(z)
        jac = np.zeros((self.n_ineq, self.n_vars))
        row = 0
        for k in range(1, self.constraint_horizon + 1):
            block = slice(self._state_col(k, 0), self._state_col(k + 1, 0))
            for constraint in self.maintenance:
                local = constraint.row_jacobian(states[k])
                jac[row : row + constraint.n_rows, block] = local.reshape(constraint.n_rows, -1)
                row += constraint.n_rows
        if self.n_slack_vars:
            c = self.cfg.limits.butterfly_ratio
            for k in range(1, self.horizon + 1):
                for robot in range(self.n_robots):
                    col = self._state_col(k, robot)
                    jac[row, col + 3] = 2.0 * states[k, robot, 3]
                    jac[row, col + 4] = -2.0 * c * c * states[k, robot, 4]
                    jac[row, self._slack_col(k - 1, robot)] = 1.0
                    row += 1
        return jac

    def bounds(self) -> Bounds:
        """Control box, velocity box for ``k >= 1`` and non-negative slack."""
        limits = self.cfg.limits
        lower = np.full(self.n_vars, -np.inf)
        upper = np.full(self.n_vars, np.inf)
        states_lo, controls_lo, slack_lo = self.unpack(lower)
        states_hi, controls_hi, _ = self.unpack(upper)
        # unpack returns views into lower/upper
        states_lo[1:, :, 3], states_hi[1:, :, 3] = -limits.v_max, limits.v_max
        states_lo[1:, :, 4], states_hi[1:, :, 4] = -limits.w_max, limits.w_max
        controls_lo[...], controls_hi[...] = limits.u_lower, limits.u_upper
        slack_lo[...] = 0.0
        return Bounds(lower, upper)

    # diagnostics

    def dynamics_defect(self, z: ArrayLike) -> float:
        """Largest absolute equality residual."""
        return float(np.max(np.abs(self.equality(z))))

    def inequality_violation(self, z: ArrayLike) -> float:
        """Largest violation of the inequalities and the bounds."""
        z = np.asarray(z, dtype=float)
        bounds = self.bounds()
        violation = max(0.0, float(np.max(bounds.lb - z)), float(np.max(z - bounds.ub)))
        if self.n_ineq:
            violation = max(violation, float(-np.min(self.inequality(z))))
        return violation

    def pip_residuals(self, z: ArrayLike) -> NDArray[np.float64]:
        """Raw head-in-triangle residuals of the anchor pairs at ``k = 1..H_c``."""
        states, _, _ = self.unpack(z)
        anchors = [constraint for constraint in self.maintenance if constraint.kind == "anchor"]
        if not anchors:
            return np.zeros((self.constraint_horizon, 0))
        return np.array(
            [
                np.concatenate([constraint.pip_residuals(states[k]) for constraint in anchors])
                for k in range(1, self.constraint_horizon + 1)
            ]
        )


def build_problem(
    states: ArrayLike,
    behavior: BehaviorSpec,
    maintenance: Sequence[MaintenanceConstraint],
    cfg: MpcConfig,
) -> MpcProblem:
    """Build the transcription for the current measured states.

    Args:
        states (ArrayLike): ``(N, 5)`` measured robot states.
        behavior (BehaviorSpec): Behaviour to pursue.
        maintenance (Sequence[MaintenanceConstraint]): Constraints of the connected pairs.
        cfg (MpcConfig): Planner configuration.

    Returns:
        MpcProblem: The assembled program.

    Raises:
        ValueError: If the states are not finite or the behaviour references unknown robots.
        PairAssignmentError: If a maintenance constraint references an unknown robot.
    """
    x0 = np.asarray(states, dtype=float).reshape(-1, STATE_DIM)
    if not np.all(np.isfinite(x0)):
        raise ValueError("Measured states must be finite")
    n_robots = x0.shape[0]
    behavior.validate(n_robots)
    for constraint in maintenance:
        bad = [robot for robot in constraint.robots if not 0 <= robot < n_robots]
        if bad:
            raise PairAssignmentError(f"Connected pair references robots {bad} outside 0..{n_robots - 1}")
    return MpcProblem(x0, behavior, maintenance, cfg)

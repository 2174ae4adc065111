"""Behaviour costs of the planner and their analytic gradients.

Every cost takes the stacked robot states ``(N, 5)`` of one time step and
returns a scalar; the matching ``*_gradient`` returns ``(N, 5)``.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal, Self

import numpy as np
from numpy.typing import NDArray

from softanchor_swarm.configs.configs import ANGLE_COST_CAP
from softanchor_swarm.geometry import Point2, rotation, rotation_derivative, wrap_angle_cost, wrap_angle_cost_gradient

BehaviorKind = Literal["connect", "goto", "velocity"]


@dataclass(frozen=True)
class ConnectionPoint:
    """A connection point ``g_BC`` fixed on one robot.

    Attributes:
        robot_index (int): Robot carrying the point.
        offset (Point2): Position in the robot body frame.
        frame_angle (float): Orientation of the connection frame in the body frame.
    """

    robot_index: int
    offset: Point2
    frame_angle: float = 0.0

    def __post_init__(self) -> None:
        """Check the robot index."""
        if self.robot_index < 0:
            raise ValueError(f"robot_index must be non-negative, got {self.robot_index}")

    def world(self, states: NDArray[np.float64]) -> NDArray[np.float64]:
        """World position of the point for stacked states."""
        px, py, theta = states[self.robot_index, :3]
        return rotation(theta) @ self.offset.as_array() + np.array([px, py])


PairEndpoints = tuple[ConnectionPoint, ConnectionPoint]


@dataclass(frozen=True, kw_only=True)
class CostWeights:
    """Weights of the planner objective.

    Attributes:
        w_p (tuple[float, float]): Diagonal of the connection position weight.
        w_theta (float): Connection angle weight.
        w_g (tuple[float, float]): Diagonal of the goal weight.
        w_v (tuple[float, float]): Diagonal of the velocity tracking weight on ``(v, w)``.
        w_f (float): Terminal behaviour weight.
        w_m (float): Stage behaviour weight.
        w_c (float): Maintenance weight over the connected pairs.
        w_s (float): Control smoothness weight.
        w_b (float): Penalty on the butterfly slack.
    """

    w_p: tuple[float, float] = (1.0, 1.0)
    w_theta: float = 0.1
    w_g: tuple[float, float] = (1.0, 1.0)
    w_v: tuple[float, float] = (1.0, 1.0)
    w_f: float = 10.0
    w_m: float = 1.0
    w_c: float = 0.1
    w_s: float = 0.01
    w_b: float = 100.0

    def __post_init__(self) -> None:
        """Reject negative weights."""
        values = (*self.w_p, self.w_theta, *self.w_g, *self.w_v, self.w_f, self.w_m, self.w_c, self.w_s, self.w_b)
        if any(value < 0.0 for value in values):
            raise ValueError(f"Cost weights must be non-negative, got {self}")


@dataclass(frozen=True)
class BehaviorSpec:
    """The single behaviour pursued by one solve.

    Attributes:
        kind (str): ``connect``, ``goto`` or ``velocity``.
        pairs (tuple[PairEndpoints, ...]): Pairs to align (connect).
        goals (Mapping[int, tuple[float, float]]): Goal position per robot (goto).
        velocities (Mapping[int, tuple[float, float]]): Target ``(v, w)`` per robot (velocity).
    """

    kind: BehaviorKind
    pairs: tuple[PairEndpoints, ...] = ()
    goals: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    velocities: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def connect(cls, pairs: Sequence[PairEndpoints]) -> Self:
        """Align the given connection pairs."""
        return cls("connect", pairs=tuple(pairs))

    @classmethod
    def goto(cls, goals: Mapping[int, tuple[float, float]]) -> Self:
        """Drive robots to goal positions."""
        return cls("goto", goals=dict(goals))

    @classmethod
    def velocity(cls, velocities: Mapping[int, tuple[float, float]]) -> Self:
        """Track body velocities."""
        return cls("velocity", velocities=dict(velocities))

    def validate(self, n_robots: int) -> None:
        """Check that every referenced robot exists.

        Raises:
            ValueError: On an unknown kind or an out-of-range robot index.
        """
        if self.kind not in ("connect", "goto", "velocity"):
            raise ValueError(f"Unknown behaviour kind '{self.kind}'")
        indices = [point.robot_index for pair in self.pairs for point in pair]
        indices += list(self.goals) + list(self.velocities)
        bad = [index for index in indices if not 0 <= index < n_robots]
        if bad:
            raise ValueError(f"Behaviour references robots {bad} outside 0..{n_robots - 1}")

    def cost(self, states: NDArray[np.float64], weights: CostWeights) -> float:
        """Behaviour cost J at one time step."""
        match self.kind:
            case "connect":
                return cost_connection(states, self.pairs, weights)
            case "goto":
                return cost_goal(states, self.goals, weights)
            case _:
                return cost_velocity(states, self.velocities, weights)

    def gradient(self, states: NDArray[np.float64], weights: CostWeights) -> NDArray[np.float64]:
        """Gradient of :meth:`cost` with respect to the states."""
        match self.kind:
            case "connect":
                return cost_connection_gradient(states, self.pairs, weights)
            case "goto":
                return cost_goal_gradient(states, self.goals, weights)
            case _:
                return cost_velocity_gradient(states, self.velocities, weights)


def _pair_residual(states: NDArray[np.float64], pair: PairEndpoints) -> tuple[NDArray[np.float64], float]:
    first, second = pair
    delta_p = first.world(states) - second.world(states)
    delta_theta = (
        states[first.robot_index, 2] + first.frame_angle - states[second.robot_index, 2] - second.frame_angle
    )
    return delta_p, float(delta_theta)


def cost_connection(
    states: NDArray[np.float64], pairs: Sequence[PairEndpoints], weights: CostWeights, cap: float = ANGLE_COST_CAP
) -> float:
    """Connection alignment cost.

    Sums ``dp^T W_p dp + W_theta tan^2(dtheta / 2)`` over the pairs, where ``dp``
    is the world-frame gap between the two connection points.

    Args:
        states (NDArray): ``(N, 5)`` robot states.
        pairs (Sequence[PairEndpoints]): Pairs to align.
        weights (CostWeights): Objective weights.
        cap (float): Clamp on the angle term.

    Returns:
        float: Non-negative cost.
    """
    w_p = np.asarray(weights.w_p)
    total = 0.0
    for pair in pairs:
        delta_p, delta_theta = _pair_residual(states, pair)
        total += float(delta_p @ (w_p * delta_p)) + weights.w_theta * wrap_angle_cost(delta_theta, cap)
    return total


def cost_connection_gradient(
    states: NDArray[np.float64], pairs: Sequence[PairEndpoints], weights: CostWeights, cap: float = ANGLE_COST_CAP
) -> NDArray[np.float64]:
    """Gradient of :func:`cost_connection`."""
    w_p = np.asarray(weights.w_p)
    grad = np.zeros_like(states, dtype=float)
    for pair in pairs:
        delta_p, delta_theta = _pair_residual(states, pair)
        d_cost_d_p = 2.0 * w_p * delta_p
        d_cost_d_theta = weights.w_theta * wrap_angle_cost_gradient(delta_theta, cap)
        for sign, point in ((1.0, pair[0]), (-1.0, pair[1])):
            row = point.robot_index
            d_point_d_theta = rotation_derivative(states[row, 2]) @ point.offset.as_array()
            grad[row, :2] += sign * d_cost_d_p
            grad[row, 2] += sign * (d_cost_d_p @ d_point_d_theta + d_cost_d_theta)
    return grad


def cost_goal(states: NDArray[np.float64], goals: Mapping[int, tuple[float, float]], weights: CostWeights) -> float:
    """Goal cost ``sum (p_i - g_i)^T W_g (p_i - g_i)`` over robots with a goal."""
    w_g = np.asarray(weights.w_g)
    total = 0.0
    for robot, goal in goals.items():
        error = states[robot, :2] - np.asarray(goal, dtype=float)
        total += float(error @ (w_g * error))
    return total


def cost_goal_gradient(
    states: NDArray[np.float64], goals: Mapping[int, tuple[float, float]], weights: CostWeights
) -> NDArray[np.float64]:
    """Gradient of :func:`cost_goal`."""
    w_g = np.asarray(weights.w_g)
    grad = np.zeros_like(states, dtype=float)
    for robot, goal in goals.items():
        grad[robot, :2] += 2.0 * w_g * (states[robot, :2] - np.asarray(goal, dtype=float))
    return grad


def cost_velocity(
    states: NDArray[np.float64], velocities: Mapping[int, tuple[float, float]], weights: CostWeights
) -> float:
    """Velocity tracking cost, a weighted square of the ``(v, w)`` residuals."""
    w_v = np.asarray(weights.w_v)
    total = 0.0
    for robot, target in velocities.items():
        error = states[robot, 3:5] - np.asarray(target, dtype=float)
        total += float(error @ (w_v * error))
    return total


def cost_velocity_gradient(
    states: NDArray[np.float64], velocities: Mapping[int, tuple[float, float]], weights: CostWeights
) -> NDArray[np.float64]:
    """Gradient of :func:`cost_velocity`."""
    w_v = np.asarray(weights.w_v)
    grad = np.zeros_like(states, dtype=float)
    for robot, target in velocities.items():
        grad[robot, 3:5] += 2.0 * w_v * (states[robot, 3:5] - np.asarray(target, dtype=float))
    return grad

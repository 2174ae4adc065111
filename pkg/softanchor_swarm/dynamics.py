"""Unicycle robot model with acceleration inputs, integrators and actuation sets."""

import math
from dataclasses import dataclass
from typing import Literal, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.configs.configs import (
    V_DOT_MAX,
    V_MAX,
    V_MIN_RATIO,
    W_DOT_MAX,
    W_MAX,
    WIGGLE_B,
    WIGGLE_V_BIAS,
    WIGGLE_W_MAX,
)
from softanchor_swarm.geometry import Pose2, normalize_angle

STATE_DIM = 5
CONTROL_DIM = 2
ButterflyMode = Literal["prose", "printed"]
Integrator = Literal["euler", "rk4"]

_FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class RobotState:
    """State ``[px, py, theta, v, w]`` of one robot.

    Attributes:
        px (float): Position x, metres.
        py (float): Position y, metres.
        theta (float): Heading in (-pi, pi].
        v (float): Linear velocity, m/s.
        w (float): Angular velocity, rad/s.
    """

    px: float = 0.0
    py: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self) -> None:
        """Reject non-finite entries and normalize the heading."""
        values = (self.px, self.py, self.theta, self.v, self.w)
        if not all(math.isfinite(value) for value in values):
            raise ValueError(f"RobotState components must be finite, got {values}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def as_array(self) -> NDArray[np.float64]:
        """Return the state as a length-5 array."""
        return np.array([self.px, self.py, self.theta, self.v, self.w])

    @classmethod
    def from_array(cls, values: ArrayLike) -> Self:
        """Build a state from a length-5 sequence."""
        px, py, theta, v, w = (float(value) for value in np.asarray(values, dtype=float).reshape(STATE_DIM))
        return cls(px, py, theta, v, w)

    @property
    def pose(self) -> Pose2:
        """Planar pose of the robot."""
        return Pose2.from_xyt(self.px, self.py, self.theta)


@dataclass(frozen=True)
class ControlInput:
    """Acceleration command ``[v_dot, w_dot]``."""

    v_dot: float = 0.0
    w_dot: float = 0.0

    def __post_init__(self) -> None:
        """Reject non-finite commands."""
        if not (math.isfinite(self.v_dot) and math.isfinite(self.w_dot)):
            raise ValueError(f"ControlInput components must be finite, got ({self.v_dot}, {self.w_dot})")

    def as_array(self) -> NDArray[np.float64]:
        """Return the command as a length-2 array."""
        return np.array([self.v_dot, self.w_dot])

    @classmethod
    def from_array(cls, values: ArrayLike) -> Self:
        """Build a command from a length-2 sequence."""
        v_dot, w_dot = (float(value) for value in np.asarray(values, dtype=float).reshape(CONTROL_DIM))
        return cls(v_dot, w_dot)


@dataclass(frozen=True, kw_only=True)
class ActuationLimits:
    """Control box and velocity feasible set of a robot.

    Attributes:
        u_min (ControlInput): Lower acceleration bounds.
        u_max (ControlInput): Upper acceleration bounds.
        v_max (float): Linear speed limit, m/s.
        w_max (float): Angular speed limit, rad/s.
        v_min_ratio (float): Butterfly ratio as a fraction of ``v_max / w_max``.
        butterfly_mode (str): ``"prose"`` (``|v| >= c|w|``) or ``"printed"``
            (``v <= |(w_max / v_max) w|``).
    """

    u_min: ControlInput = ControlInput(-V_DOT_MAX, -W_DOT_MAX)
    u_max: ControlInput = ControlInput(V_DOT_MAX, W_DOT_MAX)
    v_max: float = V_MAX
    w_max: float = W_MAX
    v_min_ratio: float = V_MIN_RATIO
    butterfly_mode: ButterflyMode = "prose"

    def __post_init__(self) -> None:
        """Check bound ordering and positivity."""
        if self.u_min.v_dot > self.u_max.v_dot or self.u_min.w_dot > self.u_max.w_dot:
            raise ValueError(f"u_min must not exceed u_max, got {self.u_min} > {self.u_max}")
        if self.v_max <= 0.0 or self.w_max <= 0.0:
            raise ValueError(f"v_max and w_max must be positive, got {self.v_max}, {self.w_max}")
        if self.v_min_ratio < 0.0:
            raise ValueError(f"v_min_ratio must be non-negative, got {self.v_min_ratio}")
        if self.butterfly_mode not in ("prose", "printed"):
            raise ValueError(f"Unknown butterfly_mode '{self.butterfly_mode}'")

    @property
    def butterfly_ratio(self) -> float:
        """Slope ``c`` of the butterfly set ``|v| >= c |w|``."""
        return self.v_min_ratio * self.v_max / self.w_max

    @property
    def u_lower(self) -> NDArray[np.float64]:
        """Lower control bounds as an array."""
        return self.u_min.as_array()

    @property
    def u_upper(self) -> NDArray[np.float64]:
        """Upper control bounds as an array."""
        return self.u_max.as_array()


@dataclass(frozen=True, kw_only=True)
class WiggleParams:
    """Open-loop wiggle: constant forward bias with a sinusoidal turn rate.

    Attributes:
        v_bias (float): Linear velocity, m/s.
        w_max (float): Amplitude of the angular velocity, rad/s.
        B (float): Angular frequency; the period is ``2 pi / B``.
    """

    v_bias: float = WIGGLE_V_BIAS
    w_max: float = WIGGLE_W_MAX
    B: float = WIGGLE_B  # pylint: disable=C0103

    def __post_init__(self) -> None:
        """Check the frequency and amplitude."""
        if self.B <= 0.0:
            raise ValueError(f"B must be positive, got {self.B}")
        if self.w_max < 0.0:
            raise ValueError(f"w_max must be non-negative, got {self.w_max}")

    @property
    def period(self) -> float:
        """Wiggle period in seconds."""
        return 2.0 * math.pi / self.B


def unicycle_rhs(states: ArrayLike, controls: ArrayLike) -> NDArray[np.float64]:
    """Vectorized dynamics ``[v cos, v sin, w, v_dot, w_dot]`` over leading axes."""
    x = np.asarray(states, dtype=float)
    u = np.asarray(controls, dtype=float)
    theta, v, w = x[..., 2], x[..., 3], x[..., 4]
    return np.stack([v * np.cos(theta), v * np.sin(theta), w, u[..., 0], u[..., 1]], axis=-1)


def unicycle_state_jacobian(state: ArrayLike) -> NDArray[np.float64]:
    """``d f / d x`` for a single robot, shape ``(5, 5)``."""
    _, _, theta, v, _ = np.asarray(state, dtype=float)
    jac = np.zeros((STATE_DIM, STATE_DIM))
    jac[0, 2] = -v * math.sin(theta)
    jac[0, 3] = math.cos(theta)
    jac[1, 2] = v * math.cos(theta)
    jac[1, 3] = math.sin(theta)
    jac[2, 4] = 1.0
    return jac


CONTROL_JACOBIAN = np.array(
    [
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
)


def derivative(x: RobotState, u: ControlInput) -> NDArray[np.float64]:
    """Time derivative of a robot state under an acceleration command.

    Args:
        x (RobotState): Current state.
        u (ControlInput): Held command.

    Returns:
        NDArray: ``[v cos theta, v sin theta, w, v_dot, w_dot]``.
    """
    return unicycle_rhs(x.as_array(), u.as_array())


def euler_step(x: RobotState, u: ControlInput, dt: float) -> RobotState:
    """Advance one forward-Euler step and renormalize the heading."""
    _check_dt(dt)
    return RobotState.from_array(euler_step_array(x.as_array(), u.as_array(), dt))


def rk4_step(x: RobotState, u: ControlInput, dt: float) -> RobotState:
    """Advance one classical Runge-Kutta step with ``u`` held constant."""
    _check_dt(dt)
    return RobotState.from_array(rk4_step_array(x.as_array(), u.as_array(), dt))


def euler_step_array(states: ArrayLike, controls: ArrayLike, dt: float) -> NDArray[np.float64]:
    """Array form of :func:`euler_step` for ``(..., 5)`` states."""
    x = np.asarray(states, dtype=float)
    nxt = x + unicycle_rhs(x, controls) * dt
    nxt[..., 2] = normalize_angle(nxt[..., 2])
    return nxt


def rk4_step_array(states: ArrayLike, controls: ArrayLike, dt: float) -> NDArray[np.float64]:
    """Array form of :func:`rk4_step` for ``(..., 5)`` states."""
    x = np.asarray(states, dtype=float)
    k1 = unicycle_rhs(x, controls)
    k2 = unicycle_rhs(x + 0.5 * dt * k1, controls)
    k3 = unicycle_rhs(x + 0.5 * dt * k2, controls)
    k4 = unicycle_rhs(x + dt * k3, controls)
    nxt = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    nxt[..., 2] = normalize_angle(nxt[..., 2])
    return nxt


def integrate(states: ArrayLike, controls: ArrayLike, dt: float, method: Integrator = "euler") -> NDArray[np.float64]:
    """Step a stack of robots with the selected integrator."""
    _check_dt(dt)
    if method == "euler":
        return euler_step_array(states, controls, dt)
    if method == "rk4":
        return rk4_step_array(states, controls, dt)
    raise ValueError(f"Unknown integrator '{method}'")


def _check_dt(dt: float) -> None:
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")


def state_feasible(x: RobotState, limits: ActuationLimits) -> bool:
    """Check the velocity box and the butterfly set.

    Args:
        x (RobotState): State to test.
        limits (ActuationLimits): Speed limits and butterfly variant.

    Returns:
        bool: True iff ``(v, w)`` lies in the feasible set.
    """
    v, w = x.v, x.w
    if abs(v) > limits.v_max + _FEASIBILITY_TOL or abs(w) > limits.w_max + _FEASIBILITY_TOL:
        return False
    if limits.butterfly_mode == "printed":
        return v <= abs(limits.w_max / limits.v_max * w) + _FEASIBILITY_TOL
    return abs(v) >= limits.butterfly_ratio * abs(w) - _FEASIBILITY_TOL


def wiggle_command(t: float, params: WiggleParams) -> tuple[float, float]:
    """Velocity command ``(v_bias, w_max sin(B t))`` of the wiggle motion."""
    return params.v_bias, params.w_max * math.sin(params.B * t)


def clamp_controls(controls: ArrayLike, limits: ActuationLimits) -> NDArray[np.float64]:
    """Clip ``(..., 2)`` acceleration commands into the control box."""
    return np.clip(np.asarray(controls, dtype=float), limits.u_lower, limits.u_upper)


def clamp_velocities(states: ArrayLike, limits: ActuationLimits) -> NDArray[np.float64]:
    """Clip ``v`` and ``w`` of ``(..., 5)`` states into the speed box."""
    clipped = np.array(states, dtype=float)
    clipped[..., 3] = np.clip(clipped[..., 3], -limits.v_max, limits.v_max)
    clipped[..., 4] = np.clip(clipped[..., 4], -limits.w_max, limits.w_max)
    return clipped


def acceleration_toward(state: ArrayLike, v_target: float, w_target: float, dt: float, limits: ActuationLimits) -> NDArray[np.float64]:
    """Acceleration reaching ``(v_target, w_target)`` within one step, saturated.

    Turns a velocity-level command (wiggle, braking) into the acceleration
    input the model accepts.
    """
    _check_dt(dt)
    x = np.asarray(state, dtype=float)
    raw = np.array([(v_target - x[3]) / dt, (w_target - x[4]) / dt])
    return clamp_controls(raw, limits)

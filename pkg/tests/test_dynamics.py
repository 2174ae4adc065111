import math

import numpy as np
import pytest

from softanchor_swarm.dynamics import (
    ActuationLimits,
    ControlInput,
    RobotState,
    WiggleParams,
    acceleration_toward,
    clamp_controls,
    clamp_velocities,
    derivative,
    euler_step,
    integrate,
    rk4_step,
    state_feasible,
    unicycle_state_jacobian,
    unicycle_rhs,
    wiggle_command,
)


@pytest.mark.parametrize(
    "state, control, expected",
    [
        ((0.0, 0.0, 0.0, 1.0, 0.0), (0.0, 0.0), (1.0, 0.0, 0.0, 0.0, 0.0)),
        ((0.0, 0.0, math.pi / 2.0, 1.0, 0.0), (0.0, 0.0), (0.0, 1.0, 0.0, 0.0, 0.0)),
        ((0.0, 0.0, 0.0, 0.0, 0.5), (0.1, -0.2), (0.0, 0.0, 0.5, 0.1, -0.2)),
    ],
)
def test_derivative(state, control, expected):
    result = derivative(RobotState(*state), ControlInput(*control))
    np.testing.assert_allclose(result, expected, atol=1e-15)


def test_euler_step_forward():
    nxt = euler_step(RobotState(0.0, 0.0, 0.0, 1.0, 0.0), ControlInput(), 0.1)
    np.testing.assert_allclose(nxt.as_array(), [0.1, 0.0, 0.0, 1.0, 0.0])


@pytest.mark.parametrize("step", [euler_step, rk4_step])
def test_zero_state_is_a_fixed_point(step):
    assert step(RobotState(), ControlInput(), 0.1) == RobotState()


def test_steps_reject_non_positive_dt():
    with pytest.raises(ValueError):
        euler_step(RobotState(), ControlInput(), 0.0)
    with pytest.raises(ValueError):
        integrate(np.zeros((1, 5)), np.zeros((1, 2)), -0.1, "rk4")


def test_velocity_subsystem_is_exact_under_euler():
    x = RobotState(0.0, 0.0, 0.3, 0.02, -0.1)
    nxt = euler_step(x, ControlInput(0.4, 1.5), 0.1)
    assert nxt.v == pytest.approx(0.02 + 0.04)
    assert nxt.w == pytest.approx(-0.1 + 0.15)


@pytest.mark.parametrize("v, w", [(0.1, 0.1), (-0.08, -0.1), (0.1, 0.0), (0.05, 0.08)])
def test_euler_tracks_rk4_over_one_second(v, w):
    euler = rk4 = RobotState(0.0, 0.0, 0.2, v, w)
    for _ in range(10):
        euler = euler_step(euler, ControlInput(), 0.1)
        rk4 = rk4_step(rk4, ControlInput(), 0.1)
    assert math.hypot(euler.px - rk4.px, euler.py - rk4.py) < 1e-3


def test_rk4_pure_rotation():
    nxt = rk4_step(RobotState(0.0, 0.0, 0.0, 0.0, 1.0), ControlInput(), 0.1)
    assert nxt.theta == pytest.approx(0.1, abs=1e-15)
    assert (nxt.px, nxt.py) == (0.0, 0.0)


def test_rk4_reproduces_circular_arc():
    v, w = 0.1, 1.0
    state = RobotState(0.0, 0.0, 0.0, v, w)
    for _ in range(10):
        state = rk4_step(state, ControlInput(), 0.01)
    t = 0.1
    assert state.px == pytest.approx(v / w * math.sin(w * t), abs=1e-8)
    assert state.py == pytest.approx(v / w * (1.0 - math.cos(w * t)), abs=1e-8)


def test_rk4_keeps_turning_radius_over_a_revolution():
    v, w, dt = 0.1, 1.0, 0.01
    states = np.array([[0.0, 0.0, 0.0, v, w]])
    center = np.array([0.0, v / w])
    for _ in range(round(2.0 * math.pi / w / dt)):
        states = integrate(states, np.zeros((1, 2)), dt, "rk4")
        assert np.linalg.norm(states[0, :2] - center) == pytest.approx(v / w, abs=1e-6)


def test_vectorized_rhs_matches_scalar_derivative():
    rng = np.random.default_rng(4)
    states, controls = rng.normal(size=(6, 5)), rng.normal(size=(6, 2))
    stacked = unicycle_rhs(states, controls)
    for row in range(6):
        expected = derivative(RobotState.from_array(states[row]), ControlInput.from_array(controls[row]))
        np.testing.assert_allclose(stacked[row], expected, atol=1e-15)


def test_state_jacobian_matches_finite_difference():
    state = np.array([0.1, -0.2, 0.7, 0.05, 0.3])
    step = 1e-7
    numeric = np.zeros((5, 5))
    for col in range(5):
        delta = np.zeros(5)
        delta[col] = step
        numeric[:, col] = (unicycle_rhs(state + delta, np.zeros(2)) - unicycle_rhs(state - delta, np.zeros(2))) / (2 * step)
    np.testing.assert_allclose(unicycle_state_jacobian(state), numeric, atol=1e-8)


def test_state_feasible_butterfly():
    limits = ActuationLimits()
    c = limits.butterfly_ratio
    assert state_feasible(RobotState(), limits)
    assert not state_feasible(RobotState(w=limits.w_max), limits)
    assert state_feasible(RobotState(v=c * limits.w_max, w=limits.w_max), limits)
    assert not state_feasible(RobotState(v=1.5 * limits.v_max), limits)


def test_state_feasible_is_symmetric():
    limits = ActuationLimits()
    rng = np.random.default_rng(8)
    for v, w in zip(rng.uniform(-0.12, 0.12, 200), rng.uniform(-2.5, 2.5, 200)):
        assert state_feasible(RobotState(v=v, w=w), limits) == state_feasible(RobotState(v=-v, w=-w), limits)


def test_printed_butterfly_forbids_straight_driving():
    printed = ActuationLimits(butterfly_mode="printed")
    assert not state_feasible(RobotState(v=0.05), printed)
    assert state_feasible(RobotState(v=0.05), ActuationLimits())


def test_limits_validation():
    with pytest.raises(ValueError):
        ActuationLimits(u_min=ControlInput(1.0, 0.0), u_max=ControlInput(0.0, 0.0))
    with pytest.raises(ValueError):
        ActuationLimits(v_max=0.0)
    with pytest.raises(ValueError):
        ActuationLimits(butterfly_mode="sideways")


def test_wiggle_command():
    params = WiggleParams(v_bias=0.02, w_max=0.6, B=2.5)
    assert wiggle_command(0.0, params) == (0.02, 0.0)
    assert wiggle_command(math.pi / 2.0 / params.B, params)[1] == pytest.approx(0.6)
    for t in (0.3, 1.7, 4.2):
        assert wiggle_command(t + params.period, params)[1] == pytest.approx(wiggle_command(t, params)[1], abs=1e-12)


def test_wiggle_params_validation():
    with pytest.raises(ValueError):
        WiggleParams(B=0.0)
    with pytest.raises(ValueError):
        WiggleParams(w_max=-1.0)


def test_clamps_and_velocity_targets():
    limits = ActuationLimits()
    np.testing.assert_allclose(clamp_controls([[3.0, -9.0]], limits), [[limits.u_max.v_dot, limits.u_min.w_dot]])
    clipped = clamp_velocities([[0.0, 0.0, 0.0, 0.5, -4.0]], limits)
    np.testing.assert_allclose(clipped[0, 3:], [limits.v_max, -limits.w_max])
    np.testing.assert_allclose(acceleration_toward([0.0, 0.0, 0.0, 0.0, 0.0], 0.1, 0.0, 0.02, limits), [0.5, 0.0])
    np.testing.assert_allclose(acceleration_toward([0.0, 0.0, 0.0, 0.0, 0.0], 0.005, 0.05, 0.02, limits), [0.25, 2.5])


def test_robot_state_validation():
    assert RobotState(theta=3.0 * math.pi).theta == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        RobotState(v=math.nan)
    with pytest.raises(ValueError):
        ControlInput(math.inf, 0.0)

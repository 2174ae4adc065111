import math
from collections import deque
from dataclasses import replace

import numpy as np
import pytest

from softanchor_swarm.configs.configs import DEFAULT_SEED, mm
from softanchor_swarm.coordination import PairStatus, TargetConfiguration
from softanchor_swarm.dynamics import WiggleParams
from softanchor_swarm.exceptions import SolverFailure
from softanchor_swarm.experiments.coupling import CouplingTrial, coupling_scenario
from softanchor_swarm.experiments.decoupling import DecouplingTrial, decoupling_scenario, run_decoupling_trial
from softanchor_swarm.geometry import Pose2
from softanchor_swarm.mpc import MpcConfig
from softanchor_swarm.sim import (
    AlignPhase,
    GotoPhase,
    RobotSpec,
    ScenarioConfig,
    SimParams,
    VelocityPhase,
    World,
    run_scenario,
    step_world,
)
from softanchor_swarm.sim.scenario import ScenarioRunner, initial_states
from softanchor_swarm.sim.world import FAULT
from tests.conftest import COUPLED_X, make_states
from tests.test_mpc import _failed_solve


def _pair_world(registry, robot0, **kwargs):
    return World(states=make_states(robot0, (0.0, 0.0, 0.0)), registry=registry, **kwargs)


def test_single_robot_zero_control_is_unchanged():
    world = World(states=make_states((0.3, -0.1, 0.4)))
    before = world.states.copy()
    step_world(world, np.zeros((1, 2)))
    assert np.array_equal(world.states, before)
    assert world.time == pytest.approx(0.02)
    assert world.pilots == (True,)


def test_full_push_inserts_anchor(anchor_registry):
    world = _pair_world(anchor_registry, (0.0526, 0.0, 0.0, -0.01, 0.0))
    step_world(world, np.zeros((2, 2)))
    assert 0 in world.joints
    assert world.joints[0].tip_seated
    assert world.events[-1].event == "inserted"
    assert world.joined(0, 1)


def test_weak_push_is_stopped_by_the_barbs(anchor_registry):
    world = _pair_world(anchor_registry, (0.0545, 0.0, 0.0, -0.0006, 0.0))
    step_world(world, np.zeros((2, 2)))
    stop = 0.1 / 0.11 * mm(1.0)
    assert world.joints == {}
    assert world.barbs[0].insertion == pytest.approx(stop, rel=1e-6)
    assert world.states[0, 0] - world.states[1, 0] == pytest.approx(0.0575 - stop, rel=1e-6)


def _seated_world(registry, x):
    world = _pair_world(registry, (x, 0.0, 0.0))
    world.seat(0)
    return world


def test_seat_marks_pair_connected(anchor_registry):
    world = _seated_world(anchor_registry, COUPLED_X)
    assert anchor_registry.connected == [0]
    assert anchor_registry.goal[0].status == PairStatus.HEAD_INSERTED
    assert world.joints[0].insertion == pytest.approx(mm(2.5))


def test_pull_without_wiggle_is_blocked(anchor_registry):
    world = _seated_world(anchor_registry, 0.0525)
    world.states[0, 3] = 0.01
    for _ in range(20):
        step_world(world, np.zeros((2, 2)))
    assert 0 in world.joints
    assert not any(event.event == "ejected" for event in world.events)
    # the joint range caps how far the pair separates
    assert world.states[0, 0] - world.states[1, 0] <= 0.0525 + 1e-9


def test_pull_after_wiggle_ejects(anchor_registry):
    world = _seated_world(anchor_registry, 0.0525)
    world.yaw_history[0] = deque([(0.0, 0.4)])
    world.states[0, 3] = 0.01
    step_world(world, np.zeros((2, 2)))
    assert world.joints == {}
    assert world.events[-1].event == "ejected"
    assert anchor_registry.connected == []
    assert anchor_registry.goal[0].status == PairStatus.DECOUPLED


def test_joint_yaw_beyond_limit_faults(anchor_registry):
    world = _seated_world(anchor_registry, COUPLED_X)
    world.states[0, 2] = 0.6
    world.resolve_contacts()
    assert world.joints == {}
    assert world.events[-1].event == FAULT
    assert anchor_registry.connected == []


def test_overlapping_bodies_are_separated():
    world = World(states=make_states((0.04, 0.0, 0.0), (0.0, 0.0, 0.0)))
    world.resolve_contacts()
    assert world.states[0, 0] - world.states[1, 0] == pytest.approx(0.05)
    assert world.states[0, 0] == pytest.approx(0.045)


def test_collisions_can_be_disabled():
    world = World(states=make_states((0.04, 0.0, 0.0), (0.0, 0.0, 0.0)), params=SimParams(body_collisions=False))
    world.resolve_contacts()
    assert world.states[0, 0] == pytest.approx(0.04)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sim_dt": 0.0},
        {"sim_dt": 0.2, "plan_dt": 0.1},
        {"integrator": "midpoint"},
        {"push_saturation_speed": 0.0},
        {"rim_friction": -0.1},
    ],
)
def test_sim_params_validation(kwargs):
    with pytest.raises(ValueError):
        SimParams(**kwargs)


def test_rk4_world_tracks_euler_world():
    start = make_states((0.0, 0.0, 0.0, 0.05, 0.5))
    worlds = [World(states=start, params=SimParams(integrator=method)) for method in ("euler", "rk4")]
    for _ in range(50):
        for world in worlds:
            step_world(world, np.zeros((1, 2)))
    euler, rk4 = (world.states[0] for world in worlds)
    assert rk4[0] > 0.04
    assert np.linalg.norm(rk4[:2] - euler[:2]) < 1e-3
    assert not np.array_equal(rk4, euler)


def test_sim_params_steps_per_plan():
    assert SimParams().steps_per_plan == 5


def test_world_rejects_mismatched_pilots():
    with pytest.raises(ValueError):
        World(states=make_states((0.0, 0.0, 0.0)), pilots=(True, False))


def _single_robot(phases=(), **kwargs):
    return ScenarioConfig(robots=(RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0), pilot=True),), phases=phases, **kwargs)


def test_empty_schedule_logs_initial_state():
    log = run_scenario(_single_robot())
    assert len(log.steps) == 1
    assert log.steps[0].t == 0.0
    assert log.phases == []
    assert log.end_time == 0.0
    assert log.trial_result().success


@pytest.mark.parametrize(
    "kwargs",
    [
        {"robots": ()},
        {"robots": (RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),), "phases": (AlignPhase(),)},
        {"robots": (RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),), "phases": (VelocityPhase(velocities={3: (0.0, 0.0)}, duration_s=1.0),)},
        {"robots": (RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),), "seed": -1},
        {"robots": (RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0)),), "pose_noise": -1.0},
    ],
)
def test_scenario_config_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)


def test_initial_states_are_seeded_and_bounded():
    cfg = coupling_scenario(CouplingTrial(offset_mm=4.0, trial=3, seed=DEFAULT_SEED))
    states = initial_states(cfg)
    assert np.array_equal(states, initial_states(cfg))
    assert not np.array_equal(states, initial_states(replace(cfg, noise_key=(4000, 4))))
    nominal = np.array([[0.065, 0.004, 0.0], [0.0, 0.0, 0.0]])
    assert np.all(np.abs(states[:, :2] - nominal[:, :2]) <= mm(1.0))
    assert np.all(np.abs(states[:, 2]) <= 0.02)
    assert np.all(states[:, 3:] == 0.0)


def test_velocity_run_is_deterministic():
    cfg = _single_robot((VelocityPhase(velocities={0: (0.05, 0.2)}, duration_s=0.5),))
    first, second = run_scenario(cfg), run_scenario(cfg)
    assert first.steps == second.steps
    assert [plan.objective for plan in first.plans] == [plan.objective for plan in second.plans]
    assert first.steps[-1].px > 0.0


def test_goto_phase_drives_toward_the_goal():
    log = run_scenario(_single_robot((GotoPhase(goals={0: (0.1, 0.0)}, duration_s=1.0),)))
    assert [phase.kind for phase in log.phases] == ["goto"]
    assert 0.01 < log.steps[-1].px < 0.12
    assert abs(log.steps[-1].py) < 0.01


def test_solver_failure_still_records_final_state(monkeypatch):
    monkeypatch.setattr("softanchor_swarm.mpc.planner.solve", _failed_solve)
    cfg = _single_robot(
        (VelocityPhase(velocities={0: (0.05, 0.0)}, duration_s=1.0),),
        mpc=MpcConfig(max_consecutive_failures=2),
    )
    runner = ScenarioRunner(cfg)
    with pytest.raises(SolverFailure):
        runner.run()
    assert runner.log.final_states is not None
    assert runner.log.final_states.shape == (1, 5)


def test_zero_offset_pair_couples_within_a_minute():
    log = run_scenario(coupling_scenario(CouplingTrial(offset_mm=0.0, trial=0, seed=DEFAULT_SEED)))
    result = log.trial_result()
    assert result.success
    assert result.final_statuses == ("head_inserted",)
    assert result.completion_time <= 60.0
    assert len(result.solve_times) > 0


def _coupled_drive(duration_s):
    return ScenarioConfig(
        name="coupled-drive",
        robots=(RobotSpec(Pose2.from_xyt(COUPLED_X, 0.0, 0.0), pilot=True), RobotSpec(Pose2.from_xyt(0.0, 0.0, 0.0))),
        target=TargetConfiguration.line(2),
        start_coupled=True,
        phases=(VelocityPhase(velocities={0: (0.05, 0.0), 1: (0.05, 0.0)}, duration_s=duration_s),),
        pose_noise=0.0,
        heading_noise=0.0,
        record_steps=False,
    )


def _check_coupled_drive(duration_s, monkeypatch):
    runner = ScenarioRunner(_coupled_drive(duration_s))
    captured = []
    plan = runner.planner.receding_horizon_step

    def spy(*args, **kwargs):
        step = plan(*args, **kwargs)
        captured.append(step)
        return step

    monkeypatch.setattr(runner.planner, "receding_horizon_step", spy)
    log = runner.run()
    constraints, _ = runner.aligner.maintenance()
    (anchor,) = constraints
    accepted = [step for step in captured if step.solution.converged]
    assert accepted
    for step in accepted:
        assert step.relaxations == (0.0,)
        for k in range(1, runner.cfg.mpc.constraint_horizon + 1):
            assert np.max(anchor.pip_residuals(step.solution.states[k])) <= 1e-6
    assert log.final_statuses == ("head_inserted",)
    return log


def test_coupled_pair_drives_together(monkeypatch):
    log = _check_coupled_drive(1.0, monkeypatch)
    assert log.final_states[0, 0] - COUPLED_X > 0.02


@pytest.mark.slow
def test_coupled_pair_drives_half_a_metre(monkeypatch):
    log = _check_coupled_drive(10.0, monkeypatch)
    assert log.final_states[1, 0] > 0.4


def test_wiggle_trace_follows_command():
    job = DecouplingTrial(trial=0, seed=DEFAULT_SEED)
    params = job.wiggle
    log = run_scenario(replace(decoupling_scenario(job), record_steps=True))
    wiggler = [step for step in log.steps if step.robot == 0]
    assert len(wiggler) > 10
    for step in wiggler:
        assert step.w == pytest.approx(params.w_max * math.sin(params.B * step.t), abs=1e-8)


def test_coupled_start_begins_connected():
    runner = ScenarioRunner(decoupling_scenario(DecouplingTrial(trial=0, seed=DEFAULT_SEED)))
    assert runner.world.registry.connected == [0]
    assert 0 in runner.world.joints


def test_wiggle_decouples_seated_pair():
    result = run_decoupling_trial(DecouplingTrial(trial=0, seed=DEFAULT_SEED))
    assert result.success
    assert result.completion_time <= 20.0
    assert result.final_statuses != ("head_inserted",)


def test_no_wiggle_never_decouples():
    job = DecouplingTrial(trial=0, seed=DEFAULT_SEED, timeout_s=2.0, wiggle=WiggleParams(w_max=0.0))
    result = run_decoupling_trial(job)
    assert not result.success
    assert result.final_statuses == ("head_inserted",)


def test_head_sticks_on_the_rim_until_it_slides_into_the_mouth(anchor_registry):
    world = _pair_world(anchor_registry, (0.0555, mm(5.0), 0.0))
    world.resolve_contacts()
    assert world.rim_contacts[0] == pytest.approx(0.005)
    assert world.states[0, 0] - world.states[1, 0] == pytest.approx(0.056)

    # mostly inward: held where it touched
    world.states[0, :2] += (-0.0004, -0.0001)
    world.resolve_contacts()
    assert world.states[0, 1] - world.states[1, 1] == pytest.approx(0.005)
    assert world.states[0, 0] - world.states[1, 0] == pytest.approx(0.056)
    assert world.barbs == {}

    # mostly sideways: slides along the rim
    world.states[0, :2] += (-0.0004, -0.001)
    world.resolve_contacts()
    assert world.rim_contacts[0] == pytest.approx(0.004)
    assert world.states[0, 1] - world.states[1, 1] == pytest.approx(0.004)

    world.states[0, :2] += (-0.0004, -0.0015)
    world.resolve_contacts()
    assert 0 in world.barbs
    assert 0 not in world.rim_contacts

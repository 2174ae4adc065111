import statistics
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import OptimizeResult

from softanchor_swarm.coordination import maintenance_constraint
from softanchor_swarm.exceptions import PairAssignmentError, SolverFailure
from softanchor_swarm.geometry import Point2
from softanchor_swarm.mpc import (
    BehaviorSpec,
    ConnectionPoint,
    CostWeights,
    MaintenanceConstraint,
    MpcConfig,
    MpcPlanner,
    MpcSolution,
    SolverStats,
    build_problem,
    solve,
)
from softanchor_swarm.experiments.timing import chain_behavior, chain_states
from softanchor_swarm.mpc.costs import (
    cost_connection,
    cost_connection_gradient,
    cost_goal,
    cost_goal_gradient,
    cost_velocity,
    cost_velocity_gradient,
)
from softanchor_swarm.mpc.solver import kkt_residual
from tests.conftest import make_states


def _numeric_gradient(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        delta = np.zeros_like(x)
        delta[index] = step
        grad[index] = (fun(x + delta) - fun(x - delta)) / (2.0 * step)
    return grad


def _numeric_jacobian(fun, z, step=1e-7):
    columns = []
    for col in range(z.size):
        delta = np.zeros_like(z)
        delta[col] = step
        columns.append((fun(z + delta) - fun(z - delta)) / (2.0 * step))
    return np.stack(columns, axis=1)


@pytest.fixture
def anchor_maintenance(anchor_registry, footprint):
    return maintenance_constraint(anchor_registry.goal[0], footprint, 0.003)


def test_connection_cost_zero_when_aligned(coupled_states, anchor_endpoints):
    assert cost_connection(coupled_states, [anchor_endpoints], CostWeights()) == pytest.approx(0.0, abs=1e-20)


def test_connection_cost_examples(anchor_endpoints):
    weights = CostWeights(w_theta=0.1)
    apart = make_states((0.06, 0.0, 0.0), (0.0, 0.0, 0.0))
    assert cost_connection(apart, [anchor_endpoints], weights) == pytest.approx(1e-4)
    turned = make_states((0.05, 0.0, np.pi / 2.0), (0.0, 0.0, 0.0))
    gap = np.array([0.05, -0.030]) - np.array([0.020, 0.0])
    assert cost_connection(turned, [anchor_endpoints], weights) == pytest.approx(gap @ gap + 0.1)


def test_goal_and_velocity_cost_examples():
    states = make_states((0.1, 0.2, 0.0, 0.05, -0.5))
    weights = CostWeights(w_g=(2.0, 1.0), w_v=(1.0, 4.0))
    assert cost_goal(states, {0: (0.0, 0.0)}, weights) == pytest.approx(2.0 * 0.01 + 0.04)
    assert cost_velocity(states, {0: (0.05, 0.0)}, weights) == pytest.approx(4.0 * 0.25)
    assert cost_goal(states, {}, weights) == 0.0


def test_cost_gradients_match_finite_differences(anchor_endpoints):
    rng = np.random.default_rng(17)
    weights = CostWeights(w_p=(1.0, 2.0), w_theta=0.3, w_g=(1.5, 0.5), w_v=(2.0, 0.7))
    knob = (ConnectionPoint(0, Point2(0.0, 0.025)), ConnectionPoint(1, Point2(0.0, -0.025)))
    pairs = [anchor_endpoints, knob]
    goals = {0: (0.1, -0.1), 1: (-0.2, 0.05)}
    velocities = {1: (0.05, 0.3)}
    for _ in range(100):
        states = np.column_stack(
            [rng.uniform(-0.2, 0.2, (2, 2)), rng.uniform(-1.0, 1.0, 2), rng.uniform(-0.1, 0.1, 2), rng.uniform(-2.0, 2.0, 2)]
        )
        for cost, gradient, argument in (
            (cost_connection, cost_connection_gradient, pairs),
            (cost_goal, cost_goal_gradient, goals),
            (cost_velocity, cost_velocity_gradient, velocities),
        ):
            numeric = _numeric_gradient(lambda x, c=cost, a=argument: c(x, a, weights), states)
            np.testing.assert_allclose(gradient(states, argument, weights), numeric, rtol=1e-4, atol=1e-8)


def test_behavior_validation():
    with pytest.raises(ValueError):
        BehaviorSpec.goto({3: (0.0, 0.0)}).validate(2)
    with pytest.raises(ValueError):
        BehaviorSpec("hover").validate(2)
    BehaviorSpec.velocity({1: (0.0, 0.0)}).validate(2)


def test_weights_reject_negative_values():
    with pytest.raises(ValueError):
        CostWeights(w_s=-1.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"prediction_horizon": 5, "constraint_horizon": 6},
        {"constraint_horizon": 0},
        {"dt": 0.0},
        {"failsafe_decay": 1.5},
        {"max_consecutive_failures": 0},
        {"butterfly_rest_w": 0.0},
        {"polish_restarts": -1},
    ],
)
def test_mpc_config_validation(kwargs):
    with pytest.raises(ValueError):
        MpcConfig(**kwargs)


def test_variable_counts_single_robot():
    cfg = MpcConfig(prediction_horizon=3, constraint_horizon=3, butterfly=False)
    problem = build_problem(make_states((0.0, 0.0, 0.0)), BehaviorSpec.velocity({0: (0.0, 0.0)}), [], cfg)
    assert problem.n_vars == 26
    assert problem.n_ineq == 0

    with_slack = build_problem(make_states((0.0, 0.0, 0.0)), BehaviorSpec.velocity({0: (0.0, 0.0)}), [], MpcConfig(prediction_horizon=3))
    assert with_slack.n_vars == 29


def test_anchor_rows_over_constraint_horizon(coupled_states, anchor_maintenance):
    cfg = MpcConfig(prediction_horizon=5, constraint_horizon=3)
    problem = build_problem(coupled_states, BehaviorSpec.connect([]), [anchor_maintenance], cfg)
    assert problem.n_pip_rows == 9
    assert problem.n_maintenance_rows == 9
    assert problem.pip_residuals(problem.zero_control_guess()).shape == (3, 3)


def test_zero_control_guess_is_consistent(coupled_states, anchor_maintenance):
    problem = build_problem(coupled_states, BehaviorSpec.connect([]), [anchor_maintenance], MpcConfig())
    z = problem.zero_control_guess()
    assert problem.dynamics_defect(z) <= 1e-12
    assert np.all(problem.pip_residuals(z) < 0.0)
    assert problem.inequality_violation(z) == 0.0


def test_build_problem_rejects_bad_references(coupled_states, anchor_maintenance):
    with pytest.raises(ValueError):
        build_problem(coupled_states, BehaviorSpec.goto({2: (0.0, 0.0)}), [], MpcConfig())
    with pytest.raises(PairAssignmentError):
        build_problem(coupled_states[:1], BehaviorSpec.connect([]), [anchor_maintenance], MpcConfig())
    with pytest.raises(ValueError):
        build_problem(make_states((np.nan, 0.0, 0.0)), BehaviorSpec.connect([]), [], MpcConfig())


def test_maintenance_constraint_validation(anchor_endpoints):
    with pytest.raises(ValueError):
        MaintenanceConstraint(kind="anchor", endpoints=anchor_endpoints)
    with pytest.raises(ValueError):
        MaintenanceConstraint(kind="knob", endpoints=anchor_endpoints, relax=-1.0)


def test_knob_rows_at_coincident_points():
    knob = MaintenanceConstraint(
        kind="knob",
        endpoints=(ConnectionPoint(0, Point2(0.0, 0.025)), ConnectionPoint(1, Point2(0.0, -0.025))),
        epsilon=0.003,
    )
    rows = knob.rows(make_states((0.0, 0.0, 0.0), (0.0, 0.05, 0.0)))
    np.testing.assert_allclose(rows, [0.003] * 4, atol=1e-15)
    assert knob.violation(make_states((0.0, 0.0, 0.0), (0.0, 0.055, 0.0))) == pytest.approx(0.002)


def test_problem_derivatives_match_finite_differences(anchor_maintenance):
    rng = np.random.default_rng(23)
    states = make_states((0.05, 0.001, 0.05, 0.02, 0.1), (0.0, 0.0, -0.05, 0.01, -0.2))
    behavior = BehaviorSpec.velocity({0: (0.05, 0.0), 1: (0.05, 0.0)})
    cfg = MpcConfig(prediction_horizon=3, constraint_horizon=2)
    problem = build_problem(states, behavior, [anchor_maintenance], cfg)
    z = problem.zero_control_guess() + rng.normal(scale=1e-3, size=problem.n_vars)

    np.testing.assert_allclose(problem.objective_gradient(z), _numeric_gradient(problem.objective, z), rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(problem.equality_jacobian(z), _numeric_jacobian(problem.equality, z), atol=1e-6)
    np.testing.assert_allclose(problem.inequality_jacobian(z), _numeric_jacobian(problem.inequality, z), atol=1e-6)


def test_goto_ahead_accelerates_forward():
    problem = build_problem(make_states((0.0, 0.0, 0.0)), BehaviorSpec.goto({0: (0.1, 0.0)}), [], MpcConfig())
    solution = solve(problem)
    assert solution.first_controls[0, 0] > 0.0
    assert solution.stats.objective <= problem.objective(problem.zero_control_guess()) + 1e-12
    assert solution.stats.dynamics_defect <= 1e-6
    assert solution.stats.wall_time_s > 0.0


def test_smoothness_only_objective_gives_zero_input():
    weights = CostWeights(w_p=(0.0, 0.0), w_theta=0.0, w_g=(0.0, 0.0), w_v=(0.0, 0.0), w_f=0.0, w_m=0.0, w_c=0.0, w_s=1.0)
    problem = build_problem(make_states((0.0, 0.0, 0.0)), BehaviorSpec.goto({0: (0.1, 0.0)}), [], MpcConfig(weights=weights))
    np.testing.assert_allclose(solve(problem).first_controls, 0.0, atol=1e-6)


def test_solve_is_deterministic():
    problem = build_problem(make_states((0.0, 0.0, 0.3), (0.1, 0.05, -0.2)), BehaviorSpec.goto({0: (0.05, 0.05), 1: (0.2, 0.0)}), [], MpcConfig())
    assert np.array_equal(solve(problem).z, solve(problem).z)


def test_coupled_pair_stays_inside_opening(coupled_states, anchor_maintenance):
    behavior = BehaviorSpec.velocity({0: (0.05, 0.0), 1: (0.05, 0.0)})
    problem = build_problem(coupled_states, behavior, [anchor_maintenance], MpcConfig())
    solution = solve(problem)
    assert np.max(problem.pip_residuals(solution.z)) <= 1e-6
    assert problem.dynamics_defect(solution.z) <= 1e-6


def test_planner_holds_still_for_zero_targets():
    planner = MpcPlanner()
    step = planner.receding_horizon_step(make_states((0.0, 0.0, 0.0)), BehaviorSpec.velocity({0: (0.0, 0.0)}))
    np.testing.assert_allclose(step.controls, 0.0, atol=1e-4)
    assert step.solve_time_s > 0.0
    assert planner.solve_times == [step.solve_time_s]
    planner.reset()
    assert planner.previous is None and planner.last_command is None


def _failed_solve(problem, warm_start=None):
    z = problem.zero_control_guess()
    states, controls, _ = problem.unpack(z)
    stats = SolverStats(
        iterations=0,
        kkt_residual=1.0,
        wall_time_s=1e-3,
        objective=problem.objective(z),
        dynamics_defect=0.0,
        violation=0.0,
        converged=False,
        status=9,
        message="Iteration limit reached",
    )
    return MpcSolution(z=z, states=states.copy(), controls=controls.copy(), stats=stats)


def test_planner_failsafe_decays_held_command(monkeypatch):
    monkeypatch.setattr("softanchor_swarm.mpc.planner.solve", _failed_solve)
    planner = MpcPlanner(MpcConfig(failsafe_decay=0.5, max_consecutive_failures=3))
    planner.last_command = np.array([[0.4, 1.0]])
    behavior = BehaviorSpec.velocity({0: (0.05, 0.0)})
    states = make_states((0.0, 0.0, 0.0))

    first = planner.receding_horizon_step(states, behavior)
    assert first.failsafe and first.consecutive_failures == 1
    np.testing.assert_allclose(first.controls, [[0.2, 0.5]])

    second = planner.receding_horizon_step(states, behavior)
    np.testing.assert_allclose(second.controls, [[0.1, 0.25]])

    with pytest.raises(SolverFailure):
        planner.receding_horizon_step(states, behavior)


def test_planner_soft_starts_small_entering_violation(anchor_maintenance):
    planner = MpcPlanner()
    states = make_states((0.035, 0.0, 0.0), (0.0, 0.0, 0.0))
    step = planner.receding_horizon_step(states, BehaviorSpec.connect([]), [anchor_maintenance], keys=[("pair", 0)])
    assert step.relaxations[0] == pytest.approx(0.001 / np.sqrt(2.0))


def test_planner_does_not_relax_satisfied_constraint(coupled_states, anchor_maintenance):
    step = MpcPlanner().receding_horizon_step(coupled_states, BehaviorSpec.connect([]), [anchor_maintenance])
    assert step.relaxations == (0.0,)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rest_start_leaves_standstill(seed):
    problem = build_problem(chain_states(2, np.random.default_rng(seed)), chain_behavior(2), [], MpcConfig())
    zero_guess = problem.zero_control_guess()
    assert np.all(problem.inequality(zero_guess) > 0.0)

    solution = solve(problem)
    assert np.max(np.abs(solution.first_controls)) > 1e-3
    assert solution.stats.objective < problem.objective(zero_guess)


def test_rest_point_is_not_stationary():
    problem = build_problem(chain_states(2, np.random.default_rng(0)), chain_behavior(2), [], MpcConfig())
    scale = problem.cfg.objective_scale
    assert kkt_residual(problem, problem.zero_control_guess(), scale) > problem.cfg.kkt_tol


def test_reported_success_is_not_enough_to_converge(monkeypatch):
    problem = build_problem(chain_states(2, np.random.default_rng(0)), chain_behavior(2), [], MpcConfig())

    def _stalled(problem, guess, constraints):
        return OptimizeResult(
            x=problem.zero_control_guess(), success=True, nit=1, status=0, message="Optimization terminated successfully"
        )

    monkeypatch.setattr("softanchor_swarm.mpc.solver._slsqp", _stalled)
    solution = solve(problem)
    assert not solution.converged
    assert solution.stats.restarts == problem.cfg.polish_restarts
    assert solution.stats.iterations == 1 + problem.cfg.polish_restarts


def test_kkt_residual_respects_bound_multiplier_signs():
    weights = CostWeights(w_p=(0.0, 0.0), w_theta=0.0, w_g=(0.0, 0.0), w_v=(0.0, 0.0), w_f=0.0, w_m=0.0, w_c=0.0, w_s=1.0)
    cfg = MpcConfig(weights=weights, butterfly=False)
    problem = build_problem(make_states((0.0, 0.0, 0.0)), BehaviorSpec.velocity({0: (0.0, 0.0)}), [], cfg)
    controls = np.zeros((problem.horizon, 1, 2))
    controls[-1, 0, 0] = cfg.limits.u_max.v_dot
    z = problem.guess_from_controls(controls)

    # the control sits on its upper bound while the objective pulls it down
    assert kkt_residual(problem, z, cfg.objective_scale) > 0.5
    assert kkt_residual(problem, problem.zero_control_guess(), cfg.objective_scale) <= 1e-9


@pytest.mark.slow
def test_warm_start_needs_no_more_iterations_than_cold():
    cfg = MpcConfig()
    behavior = chain_behavior(2)
    warm, cold = [], []
    for seed in range(50):
        first = solve(build_problem(chain_states(2, np.random.default_rng(seed)), behavior, [], cfg))
        problem = build_problem(first.states[1], behavior, [], cfg)
        planner = MpcPlanner(cfg)
        planner.previous = first
        warm.append(solve(problem, planner.warm_start(problem)).stats.iterations)
        cold.append(solve(problem).stats.iterations)
    assert statistics.median(warm) <= statistics.median(cold)


def _held_solve(problem, warm_start=None):
    solution = _failed_solve(problem, warm_start)
    stats = replace(solution.stats, converged=True, status=0, message="held")
    return MpcSolution(z=solution.z, states=solution.states, controls=solution.controls, stats=stats)


def test_soft_start_relaxation_decays_linearly(monkeypatch, anchor_maintenance):
    monkeypatch.setattr("softanchor_swarm.mpc.planner.solve", _held_solve)
    planner = MpcPlanner()
    states = make_states((0.035, 0.0, 0.0), (0.0, 0.0, 0.0))
    relaxations = [
        planner.receding_horizon_step(states, BehaviorSpec.connect([]), [anchor_maintenance], keys=[("pair", 0)]).relaxations[0]
        for _ in range(7)
    ]
    entering = 0.001 / np.sqrt(2.0)
    np.testing.assert_allclose(relaxations, entering * np.array([1.0, 0.8, 0.6, 0.4, 0.2, 0.0, 0.0]), atol=1e-12)

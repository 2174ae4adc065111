"""Polygon-constrained centralized MPC."""

from softanchor_swarm.mpc.costs import BehaviorSpec, ConnectionPoint, CostWeights
from softanchor_swarm.mpc.planner import MpcPlanner, PlanStep
from softanchor_swarm.mpc.problem import MaintenanceConstraint, MpcConfig, MpcProblem, build_problem
from softanchor_swarm.mpc.solver import MpcSolution, SolverStats, solve

__all__ = [
    "BehaviorSpec",
    "ConnectionPoint",
    "CostWeights",
    "MaintenanceConstraint",
    "MpcConfig",
    "MpcPlanner",
    "MpcProblem",
    "MpcSolution",
    "PlanStep",
    "SolverStats",
    "build_problem",
    "solve",
]

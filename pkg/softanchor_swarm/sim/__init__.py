"""Planar world with anchor contact and the scenario runner."""

from softanchor_swarm.sim.scenario import (
    AlignPhase,
    GotoPhase,
    PhaseResult,
    RobotSpec,
    ScenarioConfig,
    TrajectoryLog,
    TrialResult,
    VelocityPhase,
    WigglePhase,
    run_scenario,
)
from softanchor_swarm.sim.world import SimParams, World, WorldEvent, step_world

__all__ = [
    "AlignPhase",
    "GotoPhase",
    "PhaseResult",
    "RobotSpec",
    "ScenarioConfig",
    "SimParams",
    "TrajectoryLog",
    "TrialResult",
    "VelocityPhase",
    "WigglePhase",
    "World",
    "WorldEvent",
    "run_scenario",
    "step_world",
]

"""YAML scenario schema.

Every length in a scenario file carries its unit in the field name and is
converted to SI exactly once, when the validated model becomes a
``ScenarioConfig``.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Literal, Self

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from softanchor_swarm.anchor import AnchorLimits, ForceProfile
from softanchor_swarm.configs.configs import (
    ANCHOR_LENGTH_MM,
    BACKWARD_FORCES_N,
    BACKWARD_KNOTS_MM,
    BODY_DEPTH_MM,
    BODY_WIDTH_MM,
    COUPLE_TIMEOUT_S,
    CONSTRAINT_HORIZON,
    DECOUPLE_TIMEOUT_S,
    DEFAULT_SEED,
    DT,
    EPSILON_MM,
    FORWARD_FORCES_N,
    FORWARD_KNOTS_MM,
    HEADING_NOISE_RAD,
    HOLDING_LOAD_KG,
    JOINT_LATERAL_SLACK_MM,
    JOINT_TRAVEL_MM,
    JOINT_YAW_LIMIT,
    MAX_PUSH_FORCE_N,
    MOUTH_HALF_WIDTH_MM,
    OPENING_DEPTH_MM,
    POSE_NOISE_MM,
    PREDICTION_HORIZON,
    PULLOUT_DISPLACEMENT_MM,
    PUSH_SATURATION_SPEED,
    RELEASE_WINDOW_S,
    RIM_FRICTION,
    SLIP_DISPLACEMENT_MM,
    V_DOT_MAX,
    V_MAX,
    V_MIN_RATIO,
    W_DOT_MAX,
    W_MAX,
    WIGGLE_B,
    WIGGLE_V_BIAS,
    WIGGLE_W_MAX,
    YAW_RELEASE_THRESHOLD,
    mm,
)
from softanchor_swarm.coordination import Coupling, TargetConfiguration
from softanchor_swarm.dynamics import ActuationLimits, ControlInput, WiggleParams
from softanchor_swarm.exceptions import ConfigError
from softanchor_swarm.geometry import Pose2, RobotFootprint
from softanchor_swarm.mpc import CostWeights, MpcConfig
from softanchor_swarm.sim.scenario import (
    AlignPhase,
    GotoPhase,
    Phase,
    RobotSpec,
    ScenarioConfig,
    VelocityPhase,
    WigglePhase,
)
from softanchor_swarm.sim.world import SIM_DT, SimParams

logger = logging.getLogger(__name__)

Face = Literal["front", "back", "left", "right"]
PositiveFloat = Annotated[float, Field(gt=0.0)]
NonNegativeFloat = Annotated[float, Field(ge=0.0)]


class StrictModel(BaseModel):
    """Base model rejecting unknown fields."""

    model_config = ConfigDict(extra="forbid")


class FootprintModel(StrictModel):
    """Robot body and anchor dimensions."""

    half_width_mm: PositiveFloat = BODY_WIDTH_MM / 2.0
    half_depth_mm: PositiveFloat = BODY_DEPTH_MM / 2.0
    anchor_length_mm: PositiveFloat = ANCHOR_LENGTH_MM
    opening_depth_mm: PositiveFloat = OPENING_DEPTH_MM
    mouth_half_width_mm: PositiveFloat = MOUTH_HALF_WIDTH_MM


class RobotModel(StrictModel):
    """Initial pose of one robot."""

    x_mm: float
    y_mm: float
    theta_rad: float = 0.0
    pilot: bool = False


class SlotModel(StrictModel):
    """Slot of a custom target configuration."""

    x_mm: float
    y_mm: float
    theta_rad: float = 0.0


class CouplingModel(StrictModel):
    """Coupling between two slots of a custom target."""

    slot_a: int = Field(ge=0)
    face_a: Face
    slot_b: int = Field(ge=0)
    face_b: Face


class TargetModel(StrictModel):
    """Target configuration: a line of every robot, or explicit slots and couplings."""

    kind: Literal["line", "custom"] = "line"
    slots: list[SlotModel] = Field(default_factory=list)
    couplings: list[CouplingModel] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_custom(self) -> Self:
        """A custom target lists its slots; a line lists nothing."""
        if self.kind == "custom" and not self.slots:
            raise ValueError("a custom target needs at least one slot")
        if self.kind == "line" and (self.slots or self.couplings):
            raise ValueError("a line target takes no slots or couplings")
        return self


class GoalModel(StrictModel):
    """Goal position of one robot."""

    robot: int = Field(ge=0)
    x_mm: float
    y_mm: float


class VelocityModel(StrictModel):
    """Body velocity target of one robot."""

    robot: int = Field(ge=0)
    v_mps: float
    w_radps: float


class AlignPhaseModel(StrictModel):
    """Couple every goal pair."""

    kind: Literal["align"]
    timeout_s: PositiveFloat = COUPLE_TIMEOUT_S


class GotoPhaseModel(StrictModel):
    """Drive robots to goal positions."""

    kind: Literal["goto"]
    goals: list[GoalModel] = Field(min_length=1)
    duration_s: PositiveFloat
    tolerance_mm: PositiveFloat = EPSILON_MM


class VelocityPhaseModel(StrictModel):
    """Track body velocities."""

    kind: Literal["velocity"]
    velocities: list[VelocityModel] = Field(min_length=1)
    duration_s: PositiveFloat


class WigglePhaseModel(StrictModel):
    """Open-loop wiggle of the listed robots."""

    kind: Literal["wiggle"]
    robots: list[int] = Field(min_length=1)
    v_bias_mps: float = WIGGLE_V_BIAS
    w_max_radps: NonNegativeFloat = WIGGLE_W_MAX
    b_radps: PositiveFloat = WIGGLE_B
    timeout_s: PositiveFloat = DECOUPLE_TIMEOUT_S


PhaseModel = Annotated[
    AlignPhaseModel | GotoPhaseModel | VelocityPhaseModel | WigglePhaseModel,
    Field(discriminator="kind"),
]


class WeightsModel(StrictModel):
    """Planner objective weights."""

    w_p: tuple[NonNegativeFloat, NonNegativeFloat] = (1.0, 1.0)
    w_theta: NonNegativeFloat = 0.1
    w_g: tuple[NonNegativeFloat, NonNegativeFloat] = (1.0, 1.0)
    w_v: tuple[NonNegativeFloat, NonNegativeFloat] = (1.0, 1.0)
    w_f: NonNegativeFloat = 10.0
    w_m: NonNegativeFloat = 1.0
    w_c: NonNegativeFloat = 0.1
    w_s: NonNegativeFloat = 0.01
    w_b: NonNegativeFloat = 100.0


class LimitsModel(StrictModel):
    """Actuation limits."""

    v_max_mps: PositiveFloat = V_MAX
    w_max_radps: PositiveFloat = W_MAX
    v_dot_max_mps2: PositiveFloat = V_DOT_MAX
    w_dot_max_radps2: PositiveFloat = W_DOT_MAX
    v_min_ratio: NonNegativeFloat = V_MIN_RATIO
    butterfly_mode: Literal["prose", "printed"] = "prose"


class MpcModel(StrictModel):
    """Planner horizons and tolerances."""

    prediction_horizon: int = Field(default=PREDICTION_HORIZON, ge=1)
    constraint_horizon: int = Field(default=CONSTRAINT_HORIZON, ge=1)
    dt_s: PositiveFloat = DT
    epsilon_mm: NonNegativeFloat = EPSILON_MM
    kkt_tol: PositiveFloat = 1e-3
    max_iterations: int = Field(default=100, ge=1)
    max_consecutive_failures: int = Field(default=10, ge=1)
    butterfly: bool = True
    butterfly_rest_w_radps: PositiveFloat = 0.2
    polish_restarts: int = Field(default=2, ge=0)
    weights: WeightsModel = Field(default_factory=WeightsModel)

    @model_validator(mode="after")
    def check_horizons(self) -> Self:
        """The constraint horizon fits inside the prediction horizon."""
        if self.constraint_horizon > self.prediction_horizon:
            raise ValueError(
                f"constraint_horizon ({self.constraint_horizon}) exceeds prediction_horizon ({self.prediction_horizon})"
            )
        return self


class AnchorModel(StrictModel):
    """Anchor force profile and floating-joint compliance."""

    forward_knots_mm: list[float] = Field(default_factory=lambda: list(FORWARD_KNOTS_MM))
    forward_forces_n: list[float] = Field(default_factory=lambda: list(FORWARD_FORCES_N))
    backward_knots_mm: list[float] = Field(default_factory=lambda: list(BACKWARD_KNOTS_MM))
    backward_forces_n: list[float] = Field(default_factory=lambda: list(BACKWARD_FORCES_N))
    pullout_mm: PositiveFloat = PULLOUT_DISPLACEMENT_MM
    slip_mm: PositiveFloat = SLIP_DISPLACEMENT_MM
    travel_mm: PositiveFloat = JOINT_TRAVEL_MM
    yaw_limit_rad: PositiveFloat = JOINT_YAW_LIMIT
    lateral_slack_mm: NonNegativeFloat = JOINT_LATERAL_SLACK_MM
    yaw_release_threshold_rad: NonNegativeFloat = YAW_RELEASE_THRESHOLD
    release_window_s: PositiveFloat = RELEASE_WINDOW_S
    holding_load_kg: NonNegativeFloat = HOLDING_LOAD_KG


class SimModel(StrictModel):
    """Integration and contact settings."""

    sim_dt_s: PositiveFloat = SIM_DT
    plan_dt_s: PositiveFloat = DT
    integrator: Literal["euler", "rk4"] = "euler"
    max_push_force_n: NonNegativeFloat = MAX_PUSH_FORCE_N
    push_saturation_speed_mps: PositiveFloat = PUSH_SATURATION_SPEED
    body_collisions: bool = True
    rim_friction: NonNegativeFloat = RIM_FRICTION


class NoiseModel(StrictModel):
    """Uniform initial pose noise."""

    pose_mm: NonNegativeFloat = POSE_NOISE_MM
    heading_rad: NonNegativeFloat = HEADING_NOISE_RAD


class ScenarioModel(StrictModel):
    """A complete scenario file."""

    name: str = "scenario"
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    robots: list[RobotModel] = Field(min_length=1)
    footprint: FootprintModel = Field(default_factory=FootprintModel)
    target: TargetModel | None = None
    start_coupled: bool = False
    phases: list[PhaseModel] = Field(default_factory=list)
    mpc: MpcModel = Field(default_factory=MpcModel)
    limits: LimitsModel = Field(default_factory=LimitsModel)
    anchor: AnchorModel = Field(default_factory=AnchorModel)
    sim: SimModel = Field(default_factory=SimModel)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    record_steps: bool = True


def _footprint(model: FootprintModel) -> RobotFootprint:
    return RobotFootprint(
        half_width=mm(model.half_width_mm),
        half_depth=mm(model.half_depth_mm),
        anchor_length=mm(model.anchor_length_mm),
        opening_depth=mm(model.opening_depth_mm),
        mouth_half_width=mm(model.mouth_half_width_mm),
    )


def _target(model: TargetModel | None, n_robots: int, footprint: RobotFootprint) -> TargetConfiguration | None:
    if model is None:
        return None
    if model.kind == "line":
        return TargetConfiguration.line(n_robots, footprint)
    slots = tuple(Pose2.from_xyt(mm(slot.x_mm), mm(slot.y_mm), slot.theta_rad) for slot in model.slots)
    couplings = tuple(Coupling(c.slot_a, c.face_a, c.slot_b, c.face_b) for c in model.couplings)
    return TargetConfiguration(slots, couplings)


def _phase(model: AlignPhaseModel | GotoPhaseModel | VelocityPhaseModel | WigglePhaseModel) -> Phase:
    match model:
        case AlignPhaseModel():
            return AlignPhase(timeout_s=model.timeout_s)
        case GotoPhaseModel():
            return GotoPhase(
                goals={goal.robot: (mm(goal.x_mm), mm(goal.y_mm)) for goal in model.goals},
                duration_s=model.duration_s,
                tolerance=mm(model.tolerance_mm),
            )
        case VelocityPhaseModel():
            return VelocityPhase(
                velocities={entry.robot: (entry.v_mps, entry.w_radps) for entry in model.velocities},
                duration_s=model.duration_s,
            )
    return WigglePhase(
        robots=tuple(model.robots),
        params=WiggleParams(v_bias=model.v_bias_mps, w_max=model.w_max_radps, B=model.b_radps),
        timeout_s=model.timeout_s,
    )


def scenario_from_model(model: ScenarioModel, seed: int | None = None) -> ScenarioConfig:
    """Convert a validated scenario model to SI dataclasses.

    Args:
        model (ScenarioModel): Validated scenario.
        seed (int, optional): Overrides the seed of the file.

    Returns:
        ScenarioConfig: The scenario ready to run.

    Raises:
        ConfigError: If the values pass the schema but are physically inconsistent.
    """
    try:
        footprint = _footprint(model.footprint)
        limits = ActuationLimits(
            u_min=ControlInput(-model.limits.v_dot_max_mps2, -model.limits.w_dot_max_radps2),
            u_max=ControlInput(model.limits.v_dot_max_mps2, model.limits.w_dot_max_radps2),
            v_max=model.limits.v_max_mps,
            w_max=model.limits.w_max_radps,
            v_min_ratio=model.limits.v_min_ratio,
            butterfly_mode=model.limits.butterfly_mode,
        )
        anchor = model.anchor
        profile = ForceProfile.from_mm(
            anchor.forward_knots_mm,
            anchor.forward_forces_n,
            anchor.backward_knots_mm,
            anchor.backward_forces_n,
            pullout_displacement=mm(anchor.pullout_mm),
            slip_displacement=mm(anchor.slip_mm),
            travel=mm(anchor.travel_mm),
            holding_load_kg=anchor.holding_load_kg,
        )
        anchor_limits = AnchorLimits(
            travel=mm(anchor.travel_mm),
            yaw_limit=anchor.yaw_limit_rad,
            lateral_slack=mm(anchor.lateral_slack_mm),
            yaw_release_threshold=anchor.yaw_release_threshold_rad,
            release_window=anchor.release_window_s,
        )
        mpc = MpcConfig(
            prediction_horizon=model.mpc.prediction_horizon,
            constraint_horizon=model.mpc.constraint_horizon,
            dt=model.mpc.dt_s,
            weights=CostWeights(**model.mpc.weights.model_dump()),
            limits=limits,
            epsilon=mm(model.mpc.epsilon_mm),
            kkt_tol=model.mpc.kkt_tol,
            max_iterations=model.mpc.max_iterations,
            max_consecutive_failures=model.mpc.max_consecutive_failures,
            butterfly=model.mpc.butterfly,
            butterfly_rest_w=model.mpc.butterfly_rest_w_radps,
            polish_restarts=model.mpc.polish_restarts,
        )
        sim = SimParams(
            sim_dt=model.sim.sim_dt_s,
            plan_dt=model.sim.plan_dt_s,
            integrator=model.sim.integrator,
            limits=limits,
            anchor_limits=anchor_limits,
            profile=profile,
            max_push_force=model.sim.max_push_force_n,
            push_saturation_speed=model.sim.push_saturation_speed_mps,
            body_collisions=model.sim.body_collisions,
            rim_friction=model.sim.rim_friction,
        )
        return ScenarioConfig(
            name=model.name,
            robots=tuple(
                RobotSpec(Pose2.from_xyt(mm(robot.x_mm), mm(robot.y_mm), robot.theta_rad), robot.pilot) for robot in model.robots
            ),
            footprint=footprint,
            target=_target(model.target, len(model.robots), footprint),
            start_coupled=model.start_coupled,
            phases=tuple(_phase(phase) for phase in model.phases),
            mpc=mpc,
            sim=sim,
            seed=model.seed if seed is None else seed,
            pose_noise=mm(model.noise.pose_mm),
            heading_noise=model.noise.heading_rad,
            record_steps=model.record_steps,
        )
    except ValueError as e:
        raise ConfigError(f"Scenario '{model.name}' is inconsistent", [str(e)]) from e


def config_hash(model: ScenarioModel) -> str:
    """SHA-256 of the canonical JSON dump of a validated scenario."""
    canonical = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _error_entries(error: ValidationError) -> list[str]:
    return [f"{'.'.join(str(part) for part in entry['loc']) or '<root>'}: {entry['msg']}" for entry in error.errors()]


def parse_scenario(data: object) -> ScenarioModel:
    """Validate already-parsed YAML content.

    Raises:
        ConfigError: With one ``"field.path: message"`` entry per problem.
    """
    if not isinstance(data, dict):
        raise ConfigError("Scenario file must contain a mapping", [f"<root>: got {type(data).__name__}"])
    try:
        return ScenarioModel.model_validate(data)
    except ValidationError as e:
        raise ConfigError("Scenario failed validation", _error_entries(e)) from e


def load_scenario(path: Path | str, seed: int | None = None) -> tuple[ScenarioConfig, str]:
    """Read, validate and convert a scenario file.

    Args:
        path (Path | str): YAML scenario file.
        seed (int, optional): Overrides the seed of the file.

    Returns:
        tuple[ScenarioConfig, str]: The scenario and the hash of its validated content.

    Raises:
        ConfigError: If the file is missing, is not YAML or fails validation.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}", [f"config: no such file '{path}'"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file is not valid YAML: {path}", [str(e)]) from e

    model = parse_scenario(data)
    digest = config_hash(model)
    logger.info("Loaded scenario '%s' from %s (sha256 %s)", model.name, path, digest[:12])
    return scenario_from_model(model, seed), digest

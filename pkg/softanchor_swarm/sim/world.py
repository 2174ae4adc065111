"""Deterministic planar world with quasi-static anchor contact.

Robots are integrated kinematically from acceleration commands; contact is
resolved afterwards by projection: anchors entering an opening are gated by the
push force against the barb profile, seated anchors ride a floating joint whose
limits are enforced by projection or by the pull-out model, and robot bodies
that are not joined are separated along their minimum-penetration axis.
"""

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.anchor import (
    AnchorJointState,
    AnchorLimits,
    CouplingEvent,
    ForceProfile,
    clamp_joint,
    default_force_profile,
    resolve_pull,
    resolve_push,
)
from softanchor_swarm.configs.configs import DT, MAX_PUSH_FORCE_N, PUSH_SATURATION_SPEED, RIM_FRICTION
from softanchor_swarm.coordination import ConnectionPair, PairRegistry, PairStatus, PairType
from softanchor_swarm.dynamics import ActuationLimits, Integrator, clamp_controls, clamp_velocities, integrate
from softanchor_swarm.geometry import Pose2, RobotFootprint, transform_point, transform_points

logger = logging.getLogger(__name__)

SIM_DT = 0.02
FAULT = "fault"
_CONTACT_TOL = 1e-12


@dataclass(frozen=True, kw_only=True)
class SimParams:
    """Integration and contact parameters.

    Attributes:
        sim_dt (float): Integration step, seconds.
        plan_dt (float): Planning period, seconds (zero-order hold in between).
        integrator (str): ``euler`` or ``rk4``.
        limits (ActuationLimits): Control box and speed limits.
        anchor_limits (AnchorLimits): Floating joint compliance.
        profile (ForceProfile): Anchor force curves.
        max_push_force (float): Wheel force of one robot at full effort, newtons.
        push_saturation_speed (float): Closing speed at which the wheel force saturates, m/s.
        body_collisions (bool): Separate overlapping bodies of robots not joined by an anchor.
        rim_friction (float): Sideways over inward head travel below which a head on the rim sticks.
    """

    sim_dt: float = SIM_DT
    plan_dt: float = DT
    integrator: Integrator = "euler"
    limits: ActuationLimits = field(default_factory=ActuationLimits)
    anchor_limits: AnchorLimits = field(default_factory=AnchorLimits)
    profile: ForceProfile = field(default_factory=default_force_profile)
    max_push_force: float = MAX_PUSH_FORCE_N
    push_saturation_speed: float = PUSH_SATURATION_SPEED
    body_collisions: bool = True
    rim_friction: float = RIM_FRICTION

    def __post_init__(self) -> None:
        """Check the step sizes."""
        if self.sim_dt <= 0.0 or self.plan_dt < self.sim_dt:
            raise ValueError(f"Need 0 < sim_dt <= plan_dt, got sim_dt={self.sim_dt}, plan_dt={self.plan_dt}")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"Unknown integrator '{self.integrator}'")
        if self.max_push_force < 0.0 or self.push_saturation_speed <= 0.0:
            raise ValueError("max_push_force must be non-negative and push_saturation_speed positive")
        if self.rim_friction < 0.0:
            raise ValueError(f"rim_friction must be non-negative, got {self.rim_friction}")

    @property
    def steps_per_plan(self) -> int:
        """Integration steps between two plans."""
        return max(1, round(self.plan_dt / self.sim_dt))


@dataclass(frozen=True)
class WorldEvent:
    """A coupling event raised while stepping."""

    time: float
    pair: int
    event: str
    detail: str = ""


@dataclass(kw_only=True, eq=False)
class World:  # pylint: disable=too-many-instance-attributes
    """Mutable simulation state, owned by a single stepping loop.

    Attributes:
        states (NDArray): ``(N, 5)`` robot states.
        footprint (RobotFootprint): Shared robot footprint.
        pilots (tuple[bool, ...]): Pilot flag per robot.
        registry (PairRegistry): Pair lists; goal anchor pairs are the ones the world resolves.
        joints (dict[int, AnchorJointState]): Floating joint of every seated anchor pair.
        barbs (dict[int, AnchorJointState]): Barb progress of anchors engaged in an opening but not seated.
        rim_contacts (dict[int, float]): Lateral head position, in the opening frame, of heads stuck on the rim.
        yaw_history (dict[int, deque]): ``(time, yaw)`` samples of each joint over the release window.
        params (SimParams): Integration and contact parameters.
        time (float): Simulated time, seconds.
        events (list[WorldEvent]): Every event raised so far.
    """

    states: NDArray[np.float64]
    footprint: RobotFootprint = field(default_factory=RobotFootprint)
    pilots: tuple[bool, ...] = ()
    registry: PairRegistry = field(default_factory=PairRegistry)
    joints: dict[int, AnchorJointState] = field(default_factory=dict)
    barbs: dict[int, AnchorJointState] = field(default_factory=dict)
    rim_contacts: dict[int, float] = field(default_factory=dict)
    yaw_history: dict[int, deque] = field(default_factory=dict)
    params: SimParams = field(default_factory=SimParams)
    time: float = 0.0
    events: list[WorldEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Copy the states and default the pilot flags."""
        self.states = np.array(self.states, dtype=float).reshape(-1, 5)
        if not self.pilots:
            self.pilots = tuple(index == 0 for index in range(self.n_robots))
        if len(self.pilots) != self.n_robots:
            raise ValueError(f"Got {len(self.pilots)} pilot flags for {self.n_robots} robots")

    @property
    def n_robots(self) -> int:
        """Number of robots."""
        return int(self.states.shape[0])

    def pose(self, robot: int) -> Pose2:
        """Current pose of a robot."""
        return Pose2.from_state(self.states[robot])

    def joined(self, robot_a: int, robot_b: int) -> bool:
        """Whether a seated anchor joins the two robots."""
        return any({robot_a, robot_b} == set(self.registry.goal[index].robots) for index in self.joints)

    def anchor_pairs(self) -> list[ConnectionPair]:
        """Goal pairs coupled by an anchor."""
        return [pair for pair in self.registry.goal if pair.pair_type == PairType.ANCHOR]

    def seat(self, index: int) -> None:
        """Seat an anchor pair in its current geometry and mark it connected."""
        pair = self.registry.goal[index]
        result = clamp_joint(self._relative(pair), self.footprint, self.params.anchor_limits, tip_seated=True)
        self.joints[index] = result.joint
        self.yaw_history[index] = deque()
        self.barbs.pop(index, None)
        for status in (PairStatus.HEAD_ALIGNED, PairStatus.HEAD_INSERTED):
            if pair.status != PairStatus.HEAD_INSERTED:
                pair.advance(status)
        self.registry.connect(index)

    def _relative(self, pair: ConnectionPair) -> Pose2:
        return self.pose(pair.anchor_index).relative_to(self.pose(pair.opening_index))

    def _axes(self, robot: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        theta = self.states[robot, 2]
        return np.array([np.cos(theta), np.sin(theta)]), np.array([-np.sin(theta), np.cos(theta)])

    def _separate(self, robot_a: int, robot_b: int, direction: NDArray[np.float64], amount: float) -> None:
        # half each way; a moves along direction
        shift = 0.5 * amount * direction
        self.states[robot_a, :2] += shift
        self.states[robot_b, :2] -= shift

    def wheel_force(self, robot_a: int, robot_b: int, axis: NDArray[np.float64]) -> float:
        """Force with which ``robot_a`` drives along ``-axis`` and ``robot_b`` along ``+axis``.

        Each robot contributes in proportion to its closing speed, saturating at
        ``push_saturation_speed``; the sum is capped at ``max_push_force``.
        """
        params = self.params
        total = 0.0
        for robot, sign in ((robot_a, -1.0), (robot_b, 1.0)):
            theta, speed = self.states[robot, 2], self.states[robot, 3]
            closing = sign * speed * float(np.dot([np.cos(theta), np.sin(theta)], axis))
            total += params.max_push_force * float(np.clip(closing / params.push_saturation_speed, 0.0, 1.0))
        return min(total, params.max_push_force)

    @property
    def _barb_start(self) -> float:
        # anchor point depth at which the head meets the barbs
        return self.footprint.opening_depth - 1.5 * self.params.anchor_limits.travel

    def _anchor_depth(self, pair: ConnectionPair) -> float:
        anchor_in_j = transform_point(self._relative(pair), pair.anchor_point.offset)
        return self.footprint.half_depth - anchor_in_j.x

    def _record(self, index: int, event: str, detail: str = "") -> None:
        self.events.append(WorldEvent(round(self.time, 9), index, event, detail))

    def _decouple(self, index: int, event: str, detail: str = "") -> None:
        pair = self.registry.goal[index]
        self.joints.pop(index, None)
        self.yaw_history.pop(index, None)
        limits = self.params.anchor_limits
        progress = float(np.clip(self._anchor_depth(pair) - self._barb_start, 0.0, limits.travel))
        self.barbs[index] = AnchorJointState(insertion=progress, limits=limits)
        self.registry.release(index)
        self._record(index, event, detail)
        if event == FAULT:
            logger.warning("Pair %d faulted at t=%.2f s: %s", index, self.time, detail)
        else:
            logger.info("Pair %d %s at t=%.2f s (%s)", index, event, self.time, detail)

    def _engage(self, pair: ConnectionPair) -> None:
        """Gate an unseated anchor at the mouth and through the barbs."""
        fp, params = self.footprint, self.params
        i, j = pair.anchor_index, pair.opening_index
        head_in_j = transform_point(self._relative(pair), pair.head.offset)
        head_depth = fp.half_depth - head_in_j.x
        x_axis, y_axis = self._axes(j)

        if head_depth <= 0.0:
            self.barbs.pop(pair.index, None)
            self.rim_contacts.pop(pair.index, None)
            return
        if abs(head_in_j.y) > fp.half_width:
            self.rim_contacts.pop(pair.index, None)
            return
        if pair.index not in self.barbs:
            if abs(head_in_j.y) > fp.mouth_half_width:
                self._rim_contact(pair, head_in_j.y, head_depth)
                return
            self.rim_contacts.pop(pair.index, None)
            self.barbs[pair.index] = AnchorJointState(limits=params.anchor_limits)
        elif abs(head_in_j.y) > fp.mouth_half_width:
            excess = abs(head_in_j.y) - fp.mouth_half_width
            self._separate(i, j, -np.sign(head_in_j.y) * y_axis, excess)

        progress = self.barbs[pair.index]
        reached = self._anchor_depth(pair) - self._barb_start
        if reached <= progress.insertion:
            self.barbs[pair.index] = replace(progress, insertion=max(0.0, reached))
            return

        force = self.wheel_force(i, j, x_axis)
        advanced, outcome = resolve_push(progress, force, params.profile)
        if outcome.event == CouplingEvent.INSERTED:
            if reached < params.profile.travel:
                self.barbs[pair.index] = replace(progress, insertion=reached)
                return
            self.barbs.pop(pair.index, None)
            self.joints[pair.index] = clamp_joint(self._relative(pair), fp, params.anchor_limits).joint
            self.yaw_history[pair.index] = deque()
            self._record(pair.index, CouplingEvent.INSERTED.value, f"push {force:.2f} N")
            logger.info("Pair %d inserted at t=%.2f s (push %.2f N)", pair.index, self.time, force)
            return

        stop = advanced.insertion
        if reached > stop:
            self._separate(i, j, x_axis, reached - stop)
        self.barbs[pair.index] = replace(advanced, insertion=min(reached, stop))

    def _rim_contact(self, pair: ConnectionPair, lateral: float, depth: float) -> None:
        """Push a head that hit the rim next to the mouth back out of it.

        Between two steps the head slides along the rim only when its sideways
        travel exceeds ``rim_friction`` times its inward travel; otherwise it is
        held where it touched.
        """
        i, j = pair.anchor_index, pair.opening_index
        x_axis, y_axis = self._axes(j)
        touched = self.rim_contacts.get(pair.index)
        if touched is not None and abs(lateral - touched) <= self.params.rim_friction * depth:
            self._separate(i, j, y_axis, touched - lateral)
        else:
            self.rim_contacts[pair.index] = lateral
        self._separate(i, j, x_axis, depth)

    def _maintain(self, pair: ConnectionPair) -> None:
        """Keep a seated anchor inside its joint range or let it go."""
        fp, params = self.footprint, self.params
        limits = params.anchor_limits
        i, j = pair.anchor_index, pair.opening_index
        joint = self.joints[pair.index]
        result = clamp_joint(self._relative(pair), fp, limits, tip_seated=joint.tip_seated)
        history = self.yaw_history.setdefault(pair.index, deque())
        history.append((self.time, self._relative(pair).heading))
        while history and history[0][0] < self.time - limits.release_window:
            history.popleft()

        if result.yaw_violation:
            self._decouple(pair.index, FAULT, f"joint yaw beyond {limits.yaw_limit:.2f} rad")
            return

        x_axis, y_axis = self._axes(j)
        if result.lateral_excess > 0.0:
            self._separate(i, j, -np.sign(result.lateral) * y_axis, result.lateral_excess)
        if result.underrun > 0.0:
            force = self.wheel_force(j, i, x_axis)
            joint, outcome = resolve_pull(joint, force, [yaw for _, yaw in history], params.profile, limits)
            if outcome.event == CouplingEvent.EJECTED:
                self._decouple(pair.index, CouplingEvent.EJECTED.value, f"pull {force:.2f} N")
                return
            self._separate(i, j, -x_axis, result.underrun)
        elif result.overtravel > 0.0:
            self._separate(i, j, x_axis, result.overtravel)

        self.joints[pair.index] = clamp_joint(self._relative(pair), fp, limits, tip_seated=joint.tip_seated).joint

    def _collide(self) -> None:
        corners = [self._corners(robot) for robot in range(self.n_robots)]
        for a in range(self.n_robots):
            for b in range(a + 1, self.n_robots):
                if self.joined(a, b):
                    continue
                axis, depth = _min_penetration(corners[a], corners[b], self.states[a, 2], self.states[b, 2])
                if depth <= _CONTACT_TOL:
                    continue
                if np.dot(self.states[a, :2] - self.states[b, :2], axis) < 0.0:
                    axis = -axis
                self._separate(a, b, axis, depth)
                corners[a], corners[b] = self._corners(a), self._corners(b)

    def _corners(self, robot: int) -> NDArray[np.float64]:
        return transform_points(self.states[robot, 2], self.states[robot, :2], self.footprint.body_corners())

    def resolve_contacts(self) -> None:
        """Resolve anchor engagement, seated joints and body overlaps at the current states."""
        for pair in self.anchor_pairs():
            if pair.index in self.joints:
                self._maintain(pair)
            else:
                self._engage(pair)
        if self.params.body_collisions:
            self._collide()


def _min_penetration(
    corners_a: NDArray[np.float64], corners_b: NDArray[np.float64], theta_a: float, theta_b: float
) -> tuple[NDArray[np.float64], float]:
    """Separating-axis test of two rectangles; returns the axis of least overlap."""
    best_axis, best_depth = np.zeros(2), np.inf
    for theta in (theta_a, theta_b):
        for axis in (np.array([np.cos(theta), np.sin(theta)]), np.array([-np.sin(theta), np.cos(theta)])):
            proj_a, proj_b = corners_a @ axis, corners_b @ axis
            overlap = min(proj_a.max(), proj_b.max()) - max(proj_a.min(), proj_b.min())
            if overlap <= 0.0:
                return axis, 0.0
            if overlap < best_depth:
                best_axis, best_depth = axis, overlap
    return best_axis, float(best_depth)


def step_world(world: World, controls: ArrayLike, dt: float | None = None) -> World:
    """Advance the world by one step under constant acceleration commands.

    Args:
        world (World): World to advance in place.
        controls (ArrayLike): ``(N, 2)`` commands, clamped to the control box.
        dt (float, optional): Step length, seconds; ``world.params.sim_dt`` by default.

    Returns:
        World: The same world.
    """
    params = world.params
    dt = params.sim_dt if dt is None else dt
    commands = clamp_controls(np.asarray(controls, dtype=float).reshape(world.n_robots, 2), params.limits)
    world.states = clamp_velocities(integrate(world.states, commands, dt, params.integrator), params.limits)
    world.resolve_contacts()
    world.time += dt
    return world

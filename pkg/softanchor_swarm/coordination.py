"""Connection-pair lifecycle: assignment, augmentation, status updates and alignment."""

import logging
import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.configs.configs import EPSILON_MM, mm
from softanchor_swarm.exceptions import PairAssignmentError
from softanchor_swarm.geometry import (
    Point2,
    Pose2,
    RobotFootprint,
    footprint_polygon,
    opening_triangle,
    point_in_polygon,
    transform_point,
)
from softanchor_swarm.mpc.costs import BehaviorSpec, ConnectionPoint, PairEndpoints
from softanchor_swarm.mpc.planner import MpcPlanner, PlanStep
from softanchor_swarm.mpc.problem import MaintenanceConstraint

logger = logging.getLogger(__name__)

FACES = ("front", "back", "left", "right")


class PairStatus(StrEnum):
    """Progress of a pair toward coupling."""

    DECOUPLED = "decoupled"
    HEAD_ALIGNED = "head_aligned"
    HEAD_INSERTED = "head_inserted"


class PairType(StrEnum):
    """Mechanism joining the pair."""

    ANCHOR = "anchor"
    KNOB = "knob"


_ORDER = {PairStatus.DECOUPLED: 0, PairStatus.HEAD_ALIGNED: 1, PairStatus.HEAD_INSERTED: 2}


def face_of(offset: Point2) -> str:
    """Classify a body-frame connection offset by the face it sits on.

    Raises:
        PairAssignmentError: If the offset lies on a diagonal.
    """
    if abs(offset.x) > abs(offset.y):
        return "front" if offset.x > 0.0 else "back"
    if abs(offset.y) > abs(offset.x):
        return "left" if offset.y > 0.0 else "right"
    raise PairAssignmentError(f"Connection offset ({offset.x}, {offset.y}) is ambiguous between faces")


@dataclass(kw_only=True, eq=False)
class ConnectionPair:
    """A goal pair augmented with its status and mechanism.

    Attributes:
        index (int): Position in the goal list.
        first (ConnectionPoint): First endpoint.
        second (ConnectionPoint): Second endpoint.
        pair_type (PairType): Anchor or knob.
        status (PairStatus): Lifecycle status.
        anchor_index (int | None): Robot owning the anchor (anchor pairs).
        head (ConnectionPoint | None): Projected anchor zero position on the anchor robot.
    """

    index: int
    first: ConnectionPoint
    second: ConnectionPoint
    pair_type: PairType
    status: PairStatus = PairStatus.DECOUPLED
    anchor_index: int | None = None
    head: ConnectionPoint | None = None

    @property
    def endpoints(self) -> PairEndpoints:
        """``(first, second)``."""
        return self.first, self.second

    @property
    def robots(self) -> tuple[int, int]:
        """Robot indices of both endpoints."""
        return self.first.robot_index, self.second.robot_index

    @property
    def anchor_point(self) -> ConnectionPoint:
        """Endpoint on the anchor robot (first endpoint for knob pairs)."""
        return self.first if self.first.robot_index == self.anchor_index or self.anchor_index is None else self.second

    @property
    def opening_point(self) -> ConnectionPoint:
        """Endpoint on the robot receiving the anchor."""
        return self.second if self.anchor_point is self.first else self.first

    @property
    def opening_index(self) -> int:
        """Robot receiving the anchor."""
        return self.opening_point.robot_index

    def advance(self, status: PairStatus) -> None:
        """Move to ``status`` along the allowed transitions.

        Raises:
            ValueError: On any transition other than a forward step or the
                head_aligned to decoupled regression.
        """
        if status == self.status:
            return
        forward = _ORDER[status] == _ORDER[self.status] + 1
        regression = self.status == PairStatus.HEAD_ALIGNED and status == PairStatus.DECOUPLED
        if not (forward or regression):
            raise ValueError(f"Pair {self.index}: illegal transition {self.status} -> {status}")
        self.status = status

    def release(self) -> None:
        """Reset a physically separated pair to decoupled."""
        self.status = PairStatus.DECOUPLED


@dataclass(kw_only=True)
class PairRegistry:
    """Goal, active and connected pair lists.

    Attributes:
        goal (list[ConnectionPair]): Augmented goal pairs.
        active (list[int]): Indices of the pairs being aligned.
        connected (list[int]): Indices of the coupled pairs, in coupling order.
        epsilon (float): Status threshold, metres.
    """

    goal: list[ConnectionPair] = field(default_factory=list)
    active: list[int] = field(default_factory=list)
    connected: list[int] = field(default_factory=list)
    epsilon: float = mm(EPSILON_MM)

    def active_pairs(self) -> list[ConnectionPair]:
        """Active pairs in selection order."""
        return [self.goal[index] for index in self.active]

    def connected_pairs(self) -> list[ConnectionPair]:
        """Connected pairs in coupling order."""
        return [self.goal[index] for index in self.connected]

    @property
    def all_connected(self) -> bool:
        """True once every goal pair is coupled."""
        return len(self.connected) == len(self.goal)

    def connect(self, index: int) -> None:
        """Move a pair into the connected list."""
        if index in self.active:
            self.active.remove(index)
        if index not in self.connected:
            self.connected.append(index)
            logger.info("Pair %d connected (robots %s)", index, self.goal[index].robots)

    def release(self, index: int) -> None:
        """Drop a pair from the connected list after a physical separation."""
        if index in self.connected:
            self.connected.remove(index)
        self.goal[index].release()

    def invariant_violations(self) -> list[str]:
        """Describe every broken registry invariant (empty when consistent)."""
        problems = []
        if set(self.active) & set(self.connected):
            problems.append(f"pairs both active and connected: {sorted(set(self.active) & set(self.connected))}")
        indices = set(range(len(self.goal)))
        if not set(self.active) <= indices or not set(self.connected) <= indices:
            problems.append("registry references pairs outside the goal list")
        seen: set[int] = set()
        for pair in self.active_pairs():
            if seen & set(pair.robots):
                problems.append(f"robot(s) {sorted(seen & set(pair.robots))} in two active pairs")
            seen |= set(pair.robots)
        for pair in self.connected_pairs():
            if pair.status != PairStatus.HEAD_INSERTED:
                problems.append(f"connected pair {pair.index} has status {pair.status}")
        return problems


@dataclass(frozen=True)
class Coupling:
    """A required coupling between two target slots."""

    slot_a: int
    face_a: str
    slot_b: int
    face_b: str


@dataclass(frozen=True)
class TargetConfiguration:
    """Relative placement of robots and the couplings joining them.

    Attributes:
        slots (tuple[Pose2, ...]): Slot poses in the formation frame.
        couplings (tuple[Coupling, ...]): Faces to couple between slots.
    """

    slots: tuple[Pose2, ...]
    couplings: tuple[Coupling, ...]

    def __post_init__(self) -> None:
        """Check slot indices and that no slot face is used twice."""
        used: set[tuple[int, str]] = set()
        for coupling in self.couplings:
            for slot, face in ((coupling.slot_a, coupling.face_a), (coupling.slot_b, coupling.face_b)):
                if not 0 <= slot < len(self.slots):
                    raise PairAssignmentError(f"Coupling references slot {slot}, target has {len(self.slots)}")
                if face not in FACES:
                    raise PairAssignmentError(f"Unknown face '{face}'")
                if (slot, face) in used:
                    raise PairAssignmentError(f"Slot {slot} face '{face}' is used by two couplings")
                used.add((slot, face))
            if coupling.slot_a == coupling.slot_b:
                raise PairAssignmentError(f"Coupling joins slot {coupling.slot_a} to itself")

    @classmethod
    def line(cls, n_robots: int, footprint: RobotFootprint | None = None) -> Self:
        """Robots in a column, slot k directly ahead of slot k+1, centred on the origin.

        Each coupling joins the back of slot k to the front of slot k+1.
        """
        if n_robots < 1:
            raise PairAssignmentError(f"A line needs at least one robot, got {n_robots}")
        footprint = footprint or RobotFootprint()
        spacing = footprint.connection_offset("front").x - footprint.connection_offset("back").x
        slots = tuple(Pose2.from_xyt(((n_robots - 1) / 2.0 - k) * spacing, 0.0, 0.0) for k in range(n_robots))
        couplings = tuple(Coupling(k, "back", k + 1, "front") for k in range(n_robots - 1))
        return cls(slots, couplings)


def _formation_frame(states: NDArray[np.float64]) -> Pose2:
    centroid = states[:, :2].mean(axis=0)
    heading = math.atan2(float(np.mean(np.sin(states[:, 2]))), float(np.mean(np.cos(states[:, 2]))))
    return Pose2.from_xyt(centroid[0], centroid[1], heading)


def assign_connection_pairs(
    target: TargetConfiguration, states: ArrayLike, footprint: RobotFootprint | None = None
) -> list[PairEndpoints]:
    """Match robots to target slots and list the couplings between matched robots.

    The target is placed at the robots' centroid with their mean heading;
    matching is greedy, closest robot/slot pair first.

    Args:
        target (TargetConfiguration): Slots and couplings.
        states (ArrayLike): ``(N, 5)`` robot states.
        footprint (RobotFootprint, optional): Shared robot footprint.

    Returns:
        list[PairEndpoints]: The goal pairs.

    Raises:
        PairAssignmentError: If the target has more slots than there are robots.
    """
    footprint = footprint or RobotFootprint()
    states = np.asarray(states, dtype=float).reshape(-1, 5)
    if len(target.slots) > len(states):
        raise PairAssignmentError(f"Target has {len(target.slots)} slots but only {len(states)} robots")

    frame = _formation_frame(states)
    slot_positions = np.array([transform_point(frame, slot.position).as_array() for slot in target.slots])
    distances = np.linalg.norm(states[:, None, :2] - slot_positions[None, :, :], axis=-1)

    robot_of_slot: dict[int, int] = {}
    taken: set[int] = set()
    for _, robot, slot in sorted((distances[r, s], r, s) for r in range(len(states)) for s in range(len(target.slots))):
        if slot in robot_of_slot or robot in taken:
            continue
        robot_of_slot[slot] = robot
        taken.add(robot)

    return [
        (
            ConnectionPoint(robot_of_slot[coupling.slot_a], footprint.connection_offset(coupling.face_a)),
            ConnectionPoint(robot_of_slot[coupling.slot_b], footprint.connection_offset(coupling.face_b)),
        )
        for coupling in target.couplings
    ]


def augment_pairs(goal: Sequence[PairEndpoints], footprint: RobotFootprint | None = None) -> list[ConnectionPair]:
    """Attach status, mechanism, anchor owner and head to every goal pair.

    Back-to-front pairs are anchor pairs owned by the robot whose back face is
    involved; left-to-right pairs are knob pairs.

    Raises:
        PairAssignmentError: On any other face combination or a robot paired with itself.
    """
    footprint = footprint or RobotFootprint()
    pairs = []
    for index, (first, second) in enumerate(goal):
        if first.robot_index == second.robot_index:
            raise PairAssignmentError(f"Pair {index} joins robot {first.robot_index} to itself")
        faces = (face_of(first.offset), face_of(second.offset))
        if sorted(faces) == ["back", "front"]:
            anchor = first if faces[0] == "back" else second
            head = ConnectionPoint(anchor.robot_index, footprint.head_offset(anchor.offset), anchor.frame_angle)
            pair = ConnectionPair(
                index=index,
                first=first,
                second=second,
                pair_type=PairType.ANCHOR,
                anchor_index=anchor.robot_index,
                head=head,
            )
        elif sorted(faces) == ["left", "right"]:
            pair = ConnectionPair(index=index, first=first, second=second, pair_type=PairType.KNOB)
        else:
            raise PairAssignmentError(f"Pair {index} couples faces {faces[0]} and {faces[1]}, which no mechanism joins")
        pairs.append(pair)
    return pairs


def _pose(states: NDArray[np.float64], robot: int) -> Pose2:
    return Pose2.from_state(states[robot])


def _world(states: NDArray[np.float64], point: ConnectionPoint) -> Point2:
    return transform_point(_pose(states, point.robot_index), point.offset)


def head_opening_distance(pair: ConnectionPair, states: ArrayLike) -> float:
    """Distance from the head to the opening point (knob pairs: between endpoints)."""
    states = np.asarray(states, dtype=float)
    start = pair.head if pair.head is not None else pair.first
    end = pair.opening_point if pair.head is not None else pair.second
    return float(np.linalg.norm(_world(states, start).as_array() - _world(states, end).as_array()))


def _knob_gap(pair: ConnectionPair, states: NDArray[np.float64]) -> float:
    return float(np.linalg.norm(_world(states, pair.first).as_array() - _world(states, pair.second).as_array()))


def update_pairs(registry: PairRegistry, states: ArrayLike, footprint: RobotFootprint | None = None) -> PairRegistry:
    """Advance pair statuses from the current geometry.

    A decoupled anchor pair whose head lies in the other robot's opening
    triangle (margin epsilon) becomes head_aligned; a head_aligned pair whose
    anchor point lies in the other robot's footprint (margin epsilon) becomes
    head_inserted; a head_aligned pair whose head left the triangle falls back
    to decoupled. Inserted pairs move to the connected list. Knob pairs use the
    endpoint gap: ``2 epsilon`` to align, ``epsilon`` to insert.

    Args:
        registry (PairRegistry): Registry to update in place.
        states (ArrayLike): ``(N, 5)`` robot states.
        footprint (RobotFootprint, optional): Shared robot footprint.

    Returns:
        PairRegistry: The same registry.
    """
    footprint = footprint or RobotFootprint()
    states = np.asarray(states, dtype=float)
    epsilon = registry.epsilon
    for pair in registry.goal:
        if pair.index in registry.connected:
            continue
        if pair.pair_type == PairType.ANCHOR:
            opening_pose = _pose(states, pair.opening_index)
            head_in = point_in_polygon(_world(states, pair.head), opening_triangle(opening_pose, footprint), epsilon)
            if pair.status == PairStatus.DECOUPLED and head_in:
                pair.advance(PairStatus.HEAD_ALIGNED)
            elif pair.status == PairStatus.HEAD_ALIGNED:
                body = footprint_polygon(opening_pose, footprint)
                if point_in_polygon(_world(states, pair.anchor_point), body, epsilon):
                    pair.advance(PairStatus.HEAD_INSERTED)
                elif not head_in:
                    pair.advance(PairStatus.DECOUPLED)
        else:
            gap = _knob_gap(pair, states)
            if pair.status == PairStatus.DECOUPLED and gap <= 2.0 * epsilon:
                pair.advance(PairStatus.HEAD_ALIGNED)
            elif pair.status == PairStatus.HEAD_ALIGNED:
                if gap <= epsilon:
                    pair.advance(PairStatus.HEAD_INSERTED)
                elif gap > 2.0 * epsilon:
                    pair.advance(PairStatus.DECOUPLED)

        if pair.status == PairStatus.HEAD_INSERTED:
            registry.connect(pair.index)
    return registry


def assign_active_pairs(pairs: Sequence[ConnectionPair], states: ArrayLike, connected: Sequence[int] = ()) -> list[int]:
    """Choose robot-disjoint pairs to align now.

    Unconnected pairs are taken closest first (head-to-opening distance, then
    pair index) as long as neither robot is already in a chosen pair.

    Returns:
        list[int]: Indices of the active pairs in selection order.
    """
    states = np.asarray(states, dtype=float)
    skip = set(connected)
    candidates = sorted(
        (head_opening_distance(pair, states), pair.index)
        for pair in pairs
        if pair.index not in skip and pair.status != PairStatus.HEAD_INSERTED
    )
    by_index = {pair.index: pair for pair in pairs}
    busy: set[int] = set()
    active = []
    for _, index in candidates:
        robots = set(by_index[index].robots)
        if robots & busy:
            continue
        busy |= robots
        active.append(index)
    return active


def maintenance_constraint(pair: ConnectionPair, footprint: RobotFootprint, epsilon: float) -> MaintenanceConstraint:
    """Planner constraint keeping a connected pair together."""
    if pair.pair_type == PairType.ANCHOR:
        return MaintenanceConstraint(
            kind="anchor",
            endpoints=pair.endpoints,
            head_robot=pair.head.robot_index,
            head_offset=pair.head.offset,
            opening_robot=pair.opening_index,
            opening_vertices=footprint.opening_vertices(),
            epsilon=epsilon,
        )
    return MaintenanceConstraint(kind="knob", endpoints=pair.endpoints, epsilon=epsilon)


class PairAligner:
    """Top-level alignment loop around the planner."""

    def __init__(
        self,
        target: TargetConfiguration,
        planner: MpcPlanner,
        footprint: RobotFootprint | None = None,
        registry: PairRegistry | None = None,
    ) -> None:
        """Keep the target; goal pairs are assigned on the first call unless a registry is given.

        Args:
            target (TargetConfiguration): Formation to build.
            planner (MpcPlanner): Receding-horizon planner.
            footprint (RobotFootprint, optional): Shared robot footprint.
            registry (PairRegistry, optional): Existing pair lists to continue from.
        """
        self.target = target
        self.planner = planner
        self.footprint = footprint or RobotFootprint()
        self.registry = registry

    def ensure_registry(self, states: ArrayLike) -> PairRegistry:
        """Assign and augment the goal pairs once."""
        if self.registry is None:
            goal = assign_connection_pairs(self.target, states, self.footprint)
            self.registry = PairRegistry(goal=augment_pairs(goal, self.footprint), epsilon=self.planner.cfg.epsilon)
            logger.info("Assigned %d goal pair(s)", len(self.registry.goal))
        return self.registry

    def maintenance(self) -> tuple[list[MaintenanceConstraint], list[Hashable]]:
        """Constraints and soft-start keys of the connected pairs."""
        registry = self.registry or PairRegistry()
        pairs = registry.connected_pairs()
        constraints = [maintenance_constraint(pair, self.footprint, registry.epsilon) for pair in pairs]
        return constraints, [("pair", pair.index) for pair in pairs]

    def align_connection_pairs(self, states: ArrayLike) -> PlanStep:
        """Update the pair lists, pick the active pairs and plan one step.

        Args:
            states (ArrayLike): ``(N, 5)`` robot states.

        Returns:
            PlanStep: Command aligning the active pairs while keeping connected ones.
        """
        registry = self.ensure_registry(states)
        update_pairs(registry, states, self.footprint)
        registry.active = assign_active_pairs(registry.goal, states, registry.connected)
        behavior = BehaviorSpec.connect([pair.endpoints for pair in registry.active_pairs()])
        constraints, keys = self.maintenance()
        return self.planner.receding_horizon_step(states, behavior, constraints, keys)

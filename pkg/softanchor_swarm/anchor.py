"""Quasi-static soft anchor: calibrated force profile, floating joint and contact resolution.

The anchor tip is modelled by its measured axial force curves instead of an
articulated linkage. Pushing advances the anchor while the push force beats the
forward resistance; pulling a seated anchor has to beat the much higher backward
barrier unless a wiggle has already released the tips.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.configs.configs import (
    BACKWARD_FORCES_N,
    BACKWARD_KNOTS_MM,
    FORWARD_FORCES_N,
    FORWARD_KNOTS_MM,
    HOLDING_LOAD_KG,
    JOINT_LATERAL_SLACK_MM,
    JOINT_TRAVEL_MM,
    JOINT_YAW_LIMIT,
    PULLOUT_DISPLACEMENT_MM,
    RELEASE_WINDOW_S,
    SLIP_DISPLACEMENT_MM,
    YAW_RELEASE_THRESHOLD,
    mm,
)
from softanchor_swarm.geometry import Pose2, RobotFootprint, normalize_angle, transform_point

logger = logging.getLogger(__name__)

_TOL = 1e-12


class CouplingEvent(StrEnum):
    """Result of resolving one push or pull against the anchor."""

    NONE = "none"
    INSERTED = "inserted"
    EJECTED = "ejected"
    BLOCKED = "blocked"


@dataclass(frozen=True, kw_only=True)
class ForceProfile:
    """Axial force curves of the anchor, displacement in metres to force in newtons.

    Attributes:
        forward_knots (tuple[float, ...]): Displacements of the insertion curve.
        forward_forces (tuple[float, ...]): Resistance met while pushing in.
        backward_knots (tuple[float, ...]): Displacements of the extraction curve.
        backward_forces (tuple[float, ...]): Resistance met while pulling a seated anchor.
        pullout_displacement (float): Displacement beyond which a pulled anchor is out.
        slip_displacement (float): Displacement where the backward curve collapses.
        travel (float): Length of the barb region, metres.
        holding_load_kg (float): Load a coupled pair can carry (reported only).
    """

    forward_knots: tuple[float, ...]
    forward_forces: tuple[float, ...]
    backward_knots: tuple[float, ...]
    backward_forces: tuple[float, ...]
    pullout_displacement: float = mm(PULLOUT_DISPLACEMENT_MM)
    slip_displacement: float = mm(SLIP_DISPLACEMENT_MM)
    travel: float = mm(JOINT_TRAVEL_MM)
    holding_load_kg: float = HOLDING_LOAD_KG

    def __post_init__(self) -> None:
        """Validate both curves and the forward/backward asymmetry."""
        for name in ("forward", "backward"):
            knots = np.asarray(getattr(self, f"{name}_knots"), dtype=float)
            forces = np.asarray(getattr(self, f"{name}_forces"), dtype=float)
            if knots.shape != forces.shape or knots.size < 2:
                raise ValueError(f"{name} curve needs matching knot/force lists of length >= 2")
            if abs(knots[0]) > _TOL or abs(forces[0]) > _TOL:
                raise ValueError(f"{name} curve must start at (0, 0), got ({knots[0]}, {forces[0]})")
            if np.any(np.diff(knots) <= 0.0):
                raise ValueError(f"{name} knots must be strictly increasing: {knots.tolist()}")
            if np.any(forces < 0.0):
                raise ValueError(f"{name} forces must be non-negative: {forces.tolist()}")
        if self.pullout_displacement <= 0.0 or self.travel <= 0.0:
            raise ValueError("pullout_displacement and travel must be positive")

        forward_peak = self.forward_peak()
        window = [knot for knot in self.backward_knots if mm(1.0) - _TOL <= knot <= mm(4.0) + _TOL]
        if window and forward_peak > min(self.backward(knot) for knot in window) + _TOL:
            raise ValueError(f"forward peak {forward_peak:.3f} N exceeds the backward barrier on [1, 4] mm")

    @classmethod
    def from_mm(
        cls,
        forward_knots_mm: Sequence[float],
        forward_forces_n: Sequence[float],
        backward_knots_mm: Sequence[float],
        backward_forces_n: Sequence[float],
        **kwargs: float,
    ) -> Self:
        """Build a profile from millimetre knots, as found in calibration data."""
        return cls(
            forward_knots=tuple(mm(knot) for knot in forward_knots_mm),
            forward_forces=tuple(float(force) for force in forward_forces_n),
            backward_knots=tuple(mm(knot) for knot in backward_knots_mm),
            backward_forces=tuple(float(force) for force in backward_forces_n),
            **kwargs,
        )

    def forward(self, displacement: ArrayLike) -> float | NDArray[np.float64]:
        """Insertion resistance at ``displacement`` (flat beyond the last knot)."""
        return _interp(displacement, self.forward_knots, self.forward_forces)

    def backward(self, displacement: ArrayLike) -> float | NDArray[np.float64]:
        """Extraction resistance of a seated anchor at ``displacement``."""
        return _interp(displacement, self.backward_knots, self.backward_forces)

    def forward_peak(self, upper: float | None = None) -> float:
        """Largest forward resistance on ``[0, upper]`` (whole curve by default)."""
        return _peak(self.forward_knots, self.forward_forces, self.travel if upper is None else upper)

    def backward_peak(self, upper: float | None = None) -> float:
        """Largest backward resistance on ``[0, upper]`` (pull-out window by default)."""
        return _peak(self.backward_knots, self.backward_forces, self.pullout_displacement if upper is None else upper)


def _interp(displacement: ArrayLike, knots: Sequence[float], forces: Sequence[float]) -> float | NDArray[np.float64]:
    values = np.interp(displacement, knots, forces)
    if np.ndim(values) == 0:
        return float(values)
    return values


def _peak(knots: Sequence[float], forces: Sequence[float], upper: float) -> float:
    samples = [0.0, upper] + [knot for knot in knots if 0.0 <= knot <= upper]
    return float(np.max(np.interp(samples, knots, forces)))


def default_force_profile() -> ForceProfile:
    """Return the calibrated anchor profile.

    The forward curve peaks at 0.19 N near 2 mm; the backward curve plateaus
    at 0.6 N around 3-4 mm and collapses after 4.7 mm.
    """
    return ForceProfile.from_mm(FORWARD_KNOTS_MM, FORWARD_FORCES_N, BACKWARD_KNOTS_MM, BACKWARD_FORCES_N)


@dataclass(frozen=True, kw_only=True)
class AnchorLimits:
    """Compliance of the floating anchor joint.

    Attributes:
        travel (float): Translational range of the joint, metres.
        yaw_limit (float): Rotational range is ``[-yaw_limit, yaw_limit]``.
        lateral_slack (float): Free sideways play of the anchor holder, metres.
        yaw_release_threshold (float): Yaw amplitude that releases the tips.
        release_window (float): Length of the yaw history window, seconds.
    """

    travel: float = mm(JOINT_TRAVEL_MM)
    yaw_limit: float = JOINT_YAW_LIMIT
    lateral_slack: float = mm(JOINT_LATERAL_SLACK_MM)
    yaw_release_threshold: float = YAW_RELEASE_THRESHOLD
    release_window: float = RELEASE_WINDOW_S

    def __post_init__(self) -> None:
        """Check positivity."""
        if self.travel <= 0.0 or self.yaw_limit <= 0.0 or self.release_window <= 0.0:
            raise ValueError("travel, yaw_limit and release_window must be positive")
        if self.lateral_slack < 0.0 or self.yaw_release_threshold < 0.0:
            raise ValueError("lateral_slack and yaw_release_threshold must be non-negative")


@dataclass(frozen=True)
class AnchorJointState:
    """Floating joint of one anchor.

    Attributes:
        insertion (float): Position along the holder axis, metres, in ``[0, limits.travel]``.
        yaw (float): Joint rotation, radians, in ``[-limits.yaw_limit, limits.yaw_limit]``.
        tip_seated (bool): Whether the anchor tips rest in the slits.
        limits (AnchorLimits): Joint ranges the state is checked against.
    """

    insertion: float = 0.0
    yaw: float = 0.0
    tip_seated: bool = False
    limits: AnchorLimits = field(default=AnchorLimits(), compare=False, repr=False)

    def __post_init__(self) -> None:
        """Reject non-finite values and values outside the joint ranges."""
        if not (math.isfinite(self.insertion) and math.isfinite(self.yaw)):
            raise ValueError(f"AnchorJointState must be finite, got ({self.insertion}, {self.yaw})")
        if not -_TOL <= self.insertion <= self.limits.travel + _TOL:
            raise ValueError(f"insertion must lie in [0, {self.limits.travel}] m, got {self.insertion}")
        if abs(self.yaw) > self.limits.yaw_limit + _TOL:
            raise ValueError(f"yaw must lie within +-{self.limits.yaw_limit} rad, got {self.yaw}")


@dataclass(frozen=True)
class CouplingOutcome:
    """Event produced by a push or pull, with the unbalanced force left over."""

    event: CouplingEvent = CouplingEvent.NONE
    residual_force: float = 0.0


def resolve_push(joint: AnchorJointState, axial_force: float, profile: ForceProfile) -> tuple[AnchorJointState, CouplingOutcome]:
    """Advance the anchor through the barbs under a constant push.

    The insertion advances until the first displacement where the forward
    resistance reaches ``axial_force``; reaching the end of travel seats the tips.

    Args:
        joint (AnchorJointState): Current barb progress.
        axial_force (float): Push toward insertion, newtons.
        profile (ForceProfile): Calibrated curves.

    Returns:
        tuple[AnchorJointState, CouplingOutcome]: New joint state and event.
    """
    if axial_force < 0.0:
        raise ValueError(f"axial_force must be non-negative, got {axial_force}")
    if axial_force <= 0.0 or joint.tip_seated:
        return joint, CouplingOutcome()

    start = min(joint.insertion, profile.travel)
    stops = [start] + [knot for knot in profile.forward_knots if start < knot < profile.travel] + [profile.travel]
    resistances = [float(profile.forward(stop)) for stop in stops]
    for (lo, f_lo), (hi, f_hi) in zip(zip(stops, resistances), zip(stops[1:], resistances[1:])):
        if f_lo >= axial_force:
            return replace(joint, insertion=lo), CouplingOutcome(CouplingEvent.BLOCKED, 0.0)
        if f_hi >= axial_force:
            stop = lo + (axial_force - f_lo) / (f_hi - f_lo) * (hi - lo)
            return replace(joint, insertion=stop), CouplingOutcome(CouplingEvent.BLOCKED, 0.0)

    seated = replace(joint, insertion=profile.travel, tip_seated=True)
    return seated, CouplingOutcome(CouplingEvent.INSERTED, axial_force - resistances[-1])


def resolve_pull(
    joint: AnchorJointState,
    axial_force: float,
    yaw_history: Sequence[float],
    profile: ForceProfile,
    limits: AnchorLimits | None = None,
) -> tuple[AnchorJointState, CouplingOutcome]:
    """Try to extract the anchor with a constant pull.

    Args:
        joint (AnchorJointState): Current joint state.
        axial_force (float): Pull away from the opening, newtons.
        yaw_history (Sequence[float]): Joint yaw samples over the release window.
        profile (ForceProfile): Calibrated curves.
        limits (AnchorLimits, optional): Release threshold and joint ranges.

    Returns:
        tuple[AnchorJointState, CouplingOutcome]: New joint state and event.
    """
    limits = limits or AnchorLimits()
    if axial_force < 0.0:
        raise ValueError(f"axial_force must be non-negative, got {axial_force}")
    if axial_force <= 0.0:
        return joint, CouplingOutcome()

    released = replace(joint, insertion=0.0, yaw=0.0, tip_seated=False)
    if not joint.tip_seated:
        return released, CouplingOutcome(CouplingEvent.EJECTED, axial_force)

    wiggled = bool(yaw_history) and max(abs(yaw) for yaw in yaw_history) >= limits.yaw_release_threshold
    if wiggled:
        barrier = profile.forward_peak(profile.pullout_displacement)
        joint = replace(joint, tip_seated=False)
    else:
        barrier = profile.backward_peak()

    if axial_force >= barrier:
        return released, CouplingOutcome(CouplingEvent.EJECTED, axial_force - barrier)
    return joint, CouplingOutcome(CouplingEvent.BLOCKED, axial_force - barrier)


@dataclass(frozen=True)
class ClampResult:
    """Joint state recovered from a relative pose plus the excursions beyond compliance.

    Attributes:
        joint (AnchorJointState): Saturated joint state.
        underrun (float): How far the anchor sits outside the travel range, metres.
        overtravel (float): How far the anchor is pushed beyond the travel range, metres.
        lateral (float): Signed sideways offset of the anchor point, metres.
        lateral_excess (float): Sideways offset beyond the holder slack, metres.
        yaw_violation (bool): Whether the relative yaw exceeds the joint range.
    """

    joint: AnchorJointState
    underrun: float = 0.0
    overtravel: float = 0.0
    lateral: float = 0.0
    lateral_excess: float = 0.0
    yaw_violation: bool = False

    @property
    def violation(self) -> bool:
        """True if the relative pose exceeds any joint compliance."""
        return self.yaw_violation or self.underrun > _TOL or self.overtravel > _TOL or self.lateral_excess > _TOL


def clamp_joint(
    relative_pose: Pose2,
    footprint: RobotFootprint | None = None,
    limits: AnchorLimits | None = None,
    tip_seated: bool = True,
) -> ClampResult:
    """Read the anchor joint off the pose of the anchor robot in the opening robot's frame.

    The zero relative pose (connection points coincident, headings aligned)
    maps to the middle of the travel range with zero yaw.

    Args:
        relative_pose (Pose2): Anchor robot pose expressed in the opening robot's frame.
        footprint (RobotFootprint, optional): Shared robot footprint.
        limits (AnchorLimits, optional): Joint compliance.
        tip_seated (bool): Seated flag carried into the returned state.

    Returns:
        ClampResult: Saturated joint state and the excursions.
    """
    footprint = footprint or RobotFootprint()
    limits = limits or AnchorLimits()

    anchor_point = transform_point(relative_pose, footprint.connection_offset("back"))
    depth = footprint.half_depth - anchor_point.x
    raw_insertion = depth - (footprint.opening_depth - limits.travel / 2.0)
    yaw = normalize_angle(relative_pose.heading)

    result = ClampResult(
        joint=AnchorJointState(
            insertion=float(np.clip(raw_insertion, 0.0, limits.travel)),
            yaw=float(np.clip(yaw, -limits.yaw_limit, limits.yaw_limit)),
            tip_seated=tip_seated,
            limits=limits,
        ),
        underrun=max(0.0, -raw_insertion),
        overtravel=max(0.0, raw_insertion - limits.travel),
        lateral=anchor_point.y,
        lateral_excess=max(0.0, abs(anchor_point.y) - limits.lateral_slack),
        yaw_violation=abs(yaw) > limits.yaw_limit,
    )
    if result.yaw_violation:
        logger.debug("Joint yaw %.3f rad exceeds the %.3f rad limit", yaw, limits.yaw_limit)
    return result

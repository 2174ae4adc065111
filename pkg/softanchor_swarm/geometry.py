"""Planar poses, convex polygons and the point-in-polygon constraint family.

Every polygon handled here is convex with counterclockwise vertices. Under that
ordering a point lies inside (or on) the polygon iff it is on the left of every
directed edge, which turns membership into ``K`` linear inequalities that the
planner can use directly as constraints.
"""

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import ConvexHull, QhullError

from softanchor_swarm.configs.configs import (
    ANCHOR_LENGTH_MM,
    ANGLE_COST_CAP,
    BODY_DEPTH_MM,
    BODY_WIDTH_MM,
    MOUTH_HALF_WIDTH_MM,
    OPENING_DEPTH_MM,
    mm,
)
from softanchor_swarm.exceptions import InvalidPolygonError

_REL_TOL = 1e-12


def normalize_angle(theta: ArrayLike) -> float | NDArray[np.float64]:
    """Wrap an angle (or an array of angles) into (-pi, pi].

    Args:
        theta: Angle(s) in radians.

    Returns:
        The wrapped angle(s); a float for scalar input.
    """
    wrapped = np.arctan2(np.sin(theta), np.cos(theta))
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rotation(theta: float) -> NDArray[np.float64]:
    """Return the SO(2) matrix R(theta)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_derivative(theta: float) -> NDArray[np.float64]:
    """Return dR/dtheta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, -c], [c, -s]])


@dataclass(frozen=True)
class Point2:
    """A point (or body-frame offset) on the plane.

    Attributes:
        x (float): Coordinate along x, metres.
        y (float): Coordinate along y, metres.
    """

    x: float
    y: float

    def __post_init__(self) -> None:
        """Reject non-finite coordinates."""
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 components must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> NDArray[np.float64]:
        """Return the point as a length-2 array."""
        return np.array([self.x, self.y])

    @classmethod
    def from_array(cls, values: ArrayLike) -> Self:
        """Build a point from any length-2 sequence."""
        x, y = np.asarray(values, dtype=float).reshape(2)
        return cls(float(x), float(y))


@dataclass(frozen=True)
class Pose2:
    """An SE(2) pose: position plus heading.

    Attributes:
        position (Point2): Origin of the frame in world coordinates.
        heading (float): Frame yaw, normalized to (-pi, pi].
    """

    position: Point2
    heading: float = 0.0

    def __post_init__(self) -> None:
        """Normalize the heading."""
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @classmethod
    def from_xyt(cls, x: float, y: float, theta: float) -> Self:
        """Build a pose from scalar coordinates."""
        return cls(Point2(float(x), float(y)), float(theta))

    @classmethod
    def from_state(cls, state: ArrayLike) -> Self:
        """Build a pose from the first three entries of a robot state vector."""
        values = np.asarray(state, dtype=float)
        return cls.from_xyt(values[0], values[1], values[2])

    def compose(self, other: "Pose2") -> "Pose2":
        """Return ``self * other`` (apply ``other`` in this frame)."""
        position = transform_point(self, other.position)
        return Pose2(position, self.heading + other.heading)

    def inverse(self) -> "Pose2":
        """Return the inverse transformation."""
        rot_t = rotation(self.heading).T
        position = -rot_t @ self.position.as_array()
        return Pose2(Point2.from_array(position), -self.heading)

    def relative_to(self, frame: "Pose2") -> "Pose2":
        """Express this pose in the coordinates of ``frame``."""
        return frame.inverse().compose(self)


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """A convex polygon with counterclockwise vertices.

    Attributes:
        vertices (NDArray): ``(K, 2)`` read-only array, ``K >= 3``.
    """

    vertices: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        """Validate orientation and convexity once, at construction."""
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidPolygonError(f"Vertices must have shape (K, 2), got {vertices.shape}")
        if vertices.shape[0] < 3:
            raise InvalidPolygonError(f"A polygon needs at least 3 vertices, got {vertices.shape[0]}")
        if not np.all(np.isfinite(vertices)):
            raise InvalidPolygonError("Polygon vertices must be finite")

        scale = max(float(np.ptp(vertices, axis=0).max()), 1.0e-300)
        edges = np.roll(vertices, -1, axis=0) - vertices
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) <= _REL_TOL * scale):
            raise InvalidPolygonError("Polygon has duplicate consecutive vertices")

        next_edges = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * next_edges[:, 1] - edges[:, 1] * next_edges[:, 0]
        if _signed_area(vertices) <= 0.0:
            raise InvalidPolygonError("Polygon vertices must be ordered counterclockwise")
        if np.any(turns <= _REL_TOL * scale * scale):
            raise InvalidPolygonError("Polygon must be strictly convex (no reflex or collinear vertices)")

        vertices.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)

    @classmethod
    def from_points(cls, points: Iterable[Point2 | ArrayLike]) -> Self:
        """Build a polygon from an iterable of points."""
        return cls(np.array([_as_xy(point) for point in points], dtype=float))

    @property
    def n_vertices(self) -> int:
        """Number of vertices K."""
        return int(self.vertices.shape[0])

    @property
    def edges(self) -> NDArray[np.float64]:
        """Edge vectors ``A_{k+1} - A_k`` with ``A_{K+1} = A_1``."""
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def edge_lengths(self) -> NDArray[np.float64]:
        """Euclidean length of each edge."""
        edges = self.edges
        return np.hypot(edges[:, 0], edges[:, 1])

    @property
    def area(self) -> float:
        """Enclosed area (positive)."""
        return _signed_area(self.vertices)


def _signed_area(vertices: NDArray[np.float64]) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _as_xy(point: Point2 | ArrayLike) -> tuple[float, float]:
    if isinstance(point, Point2):
        return point.x, point.y
    x, y = np.asarray(point, dtype=float).reshape(2)
    return float(x), float(y)


def pip_residuals(point: Point2 | ArrayLike, polygon: ConvexPolygon) -> NDArray[np.float64]:
    """Evaluate the linear point-in-polygon residuals.

    ``residual_k = (y_{k+1} - y_k)(x - x_k) - (x_{k+1} - x_k)(y - y_k)``; all
    residuals are non-positive iff the point is inside or on the boundary.

    Args:
        point: The query point.
        polygon (ConvexPolygon): A validated CCW convex polygon.

    Returns:
        NDArray: One residual per edge.
    """
    x, y = _as_xy(point)
    start = polygon.vertices
    edges = polygon.edges
    return edges[:, 1] * (x - start[:, 0]) - edges[:, 0] * (y - start[:, 1])


def point_in_polygon(point: Point2 | ArrayLike, polygon: ConvexPolygon, margin: float = 0.0) -> bool:
    """Test membership with every edge offset inward by ``margin``.

    Args:
        point: The query point.
        polygon (ConvexPolygon): A validated CCW convex polygon.
        margin (float): Inward offset in metres, non-negative.

    Returns:
        bool: True iff the signed distance to every edge is at most ``-margin``.

    Raises:
        ValueError: If ``margin`` is negative.
    """
    if margin < 0.0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    residuals = pip_residuals(point, polygon)
    return bool(np.all(residuals <= -margin * polygon.edge_lengths))


def ray_cast_contains(point: Point2 | ArrayLike, polygon: ConvexPolygon) -> bool:
    """Crossing-number membership test, counting the boundary as inside.

    This is the independent oracle against which ``pip_residuals`` is checked;
    it never looks at edge orientation.
    """
    x, y = _as_xy(point)
    vertices = polygon.vertices
    count = polygon.n_vertices
    inside = False
    for k in range(count):
        ax, ay = vertices[k]
        bx, by = vertices[(k + 1) % count]
        if _on_segment(x, y, ax, ay, bx, by):
            return True
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < x_cross:
                inside = not inside
    return inside


def _on_segment(x: float, y: float, ax: float, ay: float, bx: float, by: float) -> bool:
    length = math.hypot(bx - ax, by - ay)
    cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
    if abs(cross) > _REL_TOL * max(length, 1.0) * max(length, 1.0):
        return False
    return min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by)


def transform_point(pose: Pose2, p_body: Point2 | ArrayLike) -> Point2:
    """Map a body-frame point to the world: ``R(theta) p + position``."""
    world = rotation(pose.heading) @ np.array(_as_xy(p_body)) + pose.position.as_array()
    return Point2.from_array(world)


def transform_points(theta: float, position: ArrayLike, body_points: ArrayLike) -> NDArray[np.float64]:
    """Array form of :func:`transform_point` for ``(M, 2)`` body points."""
    points = np.asarray(body_points, dtype=float).reshape(-1, 2)
    return points @ rotation(theta).T + np.asarray(position, dtype=float)


def transform_jacobian(theta: float, p_body: ArrayLike) -> NDArray[np.float64]:
    """Jacobian of the world point with respect to ``(px, py, theta)``.

    Returns:
        NDArray: ``(2, 3)`` matrix.
    """
    jac = np.zeros((2, 3))
    jac[:, :2] = np.eye(2)
    jac[:, 2] = rotation_derivative(theta) @ np.asarray(p_body, dtype=float)
    return jac


def wrap_angle_cost(dtheta: ArrayLike, cap: float = ANGLE_COST_CAP) -> float | NDArray[np.float64]:
    """Return ``min(tan^2(dtheta / 2), cap)``, a 2*pi-periodic angle penalty.

    Args:
        dtheta: Angle difference(s) in radians.
        cap (float): Clamp guarding the pole at ``dtheta = pi (mod 2pi)``.

    Returns:
        The non-negative cost; a float for scalar input.
    """
    half_tan = np.tan(0.5 * np.asarray(dtheta, dtype=float))
    cost = np.minimum(half_tan * half_tan, cap)
    if np.ndim(cost) == 0:
        return float(cost)
    return cost


def wrap_angle_cost_gradient(dtheta: ArrayLike, cap: float = ANGLE_COST_CAP) -> float | NDArray[np.float64]:
    """Derivative of :func:`wrap_angle_cost`; zero where the cap is active."""
    half_tan = np.tan(0.5 * np.asarray(dtheta, dtype=float))
    squared = half_tan * half_tan
    grad = np.where(squared < cap, half_tan * (1.0 + squared), 0.0)
    if np.ndim(grad) == 0:
        return float(grad)
    return grad


@dataclass(frozen=True, kw_only=True)
class RobotFootprint:
    """Rectangular robot body with a front opening and a rear anchor.

    Attributes:
        half_width (float): Half the body width, metres.
        half_depth (float): Half the body depth, metres.
        anchor_length (float): Length l from the anchor connection point to its head.
        opening_depth (float): Depth of the opening connection point behind the front face.
        mouth_half_width (float): Half width of the opening mouth admitting the anchor head.
    """

    half_width: float = mm(BODY_WIDTH_MM) / 2.0
    half_depth: float = mm(BODY_DEPTH_MM) / 2.0
    anchor_length: float = mm(ANCHOR_LENGTH_MM)
    opening_depth: float = mm(OPENING_DEPTH_MM)
    mouth_half_width: float = mm(MOUTH_HALF_WIDTH_MM)

    def __post_init__(self) -> None:
        """Check the footprint dimensions."""
        for name in ("half_width", "half_depth", "anchor_length", "mouth_half_width"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.opening_depth < 2.0 * self.half_depth:
            raise ValueError(f"opening_depth must lie inside the body, got {self.opening_depth}")

    def connection_offset(self, face: str) -> Point2:
        """Body-frame connection point of a face (front, back, left, right)."""
        offsets = self.connection_offsets
        if face not in offsets:
            raise ValueError(f"Unknown face '{face}', expected one of {sorted(offsets)}")
        return offsets[face]

    @property
    def connection_offsets(self) -> dict[str, Point2]:
        """All four connection points p_C keyed by face."""
        return {
            "front": Point2(self.half_depth - self.opening_depth, 0.0),
            "back": Point2(-self.half_depth - self.opening_depth, 0.0),
            "left": Point2(0.0, self.half_width),
            "right": Point2(0.0, -self.half_width),
        }

    @property
    def front_right(self) -> Point2:
        """Front right corner C^r in the body frame."""
        return Point2(self.half_depth, -self.half_width)

    @property
    def front_left(self) -> Point2:
        """Front left corner C^l in the body frame."""
        return Point2(self.half_depth, self.half_width)

    def head_offset(self, anchor_offset: Point2) -> Point2:
        """Anchor head position ``p_C + [-l, 0]`` for an anchor at ``anchor_offset``."""
        return Point2(anchor_offset.x - self.anchor_length, anchor_offset.y)

    def body_corners(self) -> NDArray[np.float64]:
        """Body rectangle corners, counterclockwise from the back right."""
        hd, hw = self.half_depth, self.half_width
        return np.array([[-hd, -hw], [hd, -hw], [hd, hw], [-hd, hw]])

    def opening_vertices(self) -> NDArray[np.float64]:
        """Opening triangle ``(R, C^r, C^l)`` in the body frame."""
        return np.array([[0.0, 0.0], self.front_right.as_array(), self.front_left.as_array()])


def footprint_polygon(pose: Pose2, footprint: RobotFootprint) -> ConvexPolygon:
    """World-frame body rectangle of a robot at ``pose``."""
    corners = transform_points(pose.heading, pose.position.as_array(), footprint.body_corners())
    return ConvexPolygon(corners)


def opening_triangle(pose: Pose2, footprint: RobotFootprint) -> ConvexPolygon:
    """World-frame triangle ``(R_j, C_j^r, C_j^l)`` bounding the opening region."""
    vertices = transform_points(pose.heading, pose.position.as_array(), footprint.opening_vertices())
    return ConvexPolygon(vertices)


def random_convex_polygon(rng: np.random.Generator, n_points: int = 8, scale: float = 1.0) -> ConvexPolygon:
    """Sample a convex polygon as the hull of uniform random points.

    Args:
        rng (np.random.Generator): Source of randomness.
        n_points (int): Number of points the hull is taken over (>= 3).
        scale (float): Points are drawn from ``[-scale, scale]^2``.

    Returns:
        ConvexPolygon: A valid CCW polygon.
    """
    if n_points < 3:
        raise ValueError(f"n_points must be at least 3, got {n_points}")
    while True:
        points = rng.uniform(-scale, scale, size=(n_points, 2))
        try:
            hull = ConvexHull(points)
            return ConvexPolygon(points[hull.vertices])
        except (QhullError, InvalidPolygonError):
            continue

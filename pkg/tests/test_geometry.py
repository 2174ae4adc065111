import math

import numpy as np
import pytest

from softanchor_swarm.exceptions import InvalidPolygonError
from softanchor_swarm.geometry import (
    ConvexPolygon,
    Point2,
    Pose2,
    RobotFootprint,
    footprint_polygon,
    normalize_angle,
    opening_triangle,
    pip_residuals,
    point_in_polygon,
    random_convex_polygon,
    ray_cast_contains,
    transform_point,
    transform_points,
    wrap_angle_cost,
    wrap_angle_cost_gradient,
)


def test_pip_residuals_interior_point(unit_square):
    assert np.all(pip_residuals(Point2(0.5, 0.5), unit_square) < 0.0)


def test_pip_residuals_boundary_point(unit_square):
    residuals = pip_residuals((0.5, 0.0), unit_square)
    assert residuals[0] == 0.0
    assert np.all(residuals[1:] < 0.0)


def test_pip_residuals_outside_point(unit_square):
    residuals = pip_residuals((2.0, 0.5), unit_square)
    assert residuals[1] == pytest.approx(1.0)
    assert residuals[0] < 0.0 and residuals[2] < 0.0


@pytest.mark.parametrize(
    "vertices",
    [
        [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],  # clockwise
        [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]],  # collinear triple
        [[0.0, 0.0], [1.0, 0.0]],
        [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],  # duplicate vertex
        [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]],  # reflex
        [[0.0, 0.0], [1.0, np.nan], [0.0, 1.0]],
    ],
)
def test_invalid_polygons_are_rejected(vertices):
    with pytest.raises(InvalidPolygonError):
        ConvexPolygon(np.array(vertices, dtype=float))


def test_polygon_vertices_are_read_only(unit_square):
    with pytest.raises(ValueError):
        unit_square.vertices[0, 0] = 5.0


def test_point_in_polygon_with_margin(unit_square):
    assert point_in_polygon((0.5, 0.5), unit_square, margin=0.1)
    assert not point_in_polygon((0.05, 0.5), unit_square, margin=0.1)
    assert point_in_polygon((0.05, 0.5), unit_square)


def test_point_in_polygon_rejects_negative_margin(unit_square):
    with pytest.raises(ValueError):
        point_in_polygon((0.5, 0.5), unit_square, margin=-0.01)


def test_residuals_agree_with_ray_casting():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        polygon = random_convex_polygon(rng, n_points=int(rng.integers(3, 10)))
        point = rng.uniform(-1.5, 1.5, size=2)
        assert bool(np.all(pip_residuals(point, polygon) <= 0.0)) == ray_cast_contains(point, polygon)


def test_ray_casting_counts_vertices_and_edges_as_inside(unit_square):
    assert ray_cast_contains((0.0, 0.0), unit_square)
    assert ray_cast_contains((1.0, 0.5), unit_square)
    assert not ray_cast_contains((1.0 + 1e-9, 0.5), unit_square)


def test_transform_point_identity_and_quarter_turn():
    assert transform_point(Pose2.from_xyt(0.0, 0.0, 0.0), (0.3, 0.1)) == Point2(0.3, 0.1)
    turned = transform_point(Pose2.from_xyt(0.0, 0.0, math.pi / 2.0), Point2(1.0, 0.0))
    assert turned.x == pytest.approx(0.0, abs=1e-12)
    assert turned.y == pytest.approx(1.0)


def test_transform_composition_matches_composed_pose():
    rng = np.random.default_rng(3)
    for _ in range(100):
        g1 = Pose2.from_xyt(*rng.uniform(-1.0, 1.0, 2), rng.uniform(-math.pi, math.pi))
        g2 = Pose2.from_xyt(*rng.uniform(-1.0, 1.0, 2), rng.uniform(-math.pi, math.pi))
        point = rng.uniform(-1.0, 1.0, 2)
        nested = transform_point(g1, transform_point(g2, point))
        composed = transform_point(g1.compose(g2), point)
        np.testing.assert_allclose(nested.as_array(), composed.as_array(), atol=1e-12)


def test_transform_is_an_isometry():
    rng = np.random.default_rng(5)
    for _ in range(100):
        pose = Pose2.from_xyt(*rng.uniform(-2.0, 2.0, 2), rng.uniform(-math.pi, math.pi))
        a, b = rng.uniform(-1.0, 1.0, (2, 2))
        moved = transform_points(pose.heading, pose.position.as_array(), np.stack([a, b]))
        assert np.linalg.norm(moved[0] - moved[1]) == pytest.approx(np.linalg.norm(a - b), abs=1e-12)


def test_relative_to_inverts_composition():
    frame = Pose2.from_xyt(0.2, -0.1, 0.7)
    pose = Pose2.from_xyt(-0.3, 0.4, -2.0)
    recovered = frame.compose(pose.relative_to(frame))
    assert recovered.position.x == pytest.approx(pose.position.x)
    assert recovered.position.y == pytest.approx(pose.position.y)
    assert recovered.heading == pytest.approx(pose.heading)


def test_headings_are_normalized():
    assert Pose2.from_xyt(0.0, 0.0, 3.0 * math.pi).heading == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    np.testing.assert_allclose(normalize_angle(np.array([0.5, 2.0 * math.pi + 0.5])), [0.5, 0.5])


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(math.inf, 0.0)


def test_wrap_angle_cost_values():
    assert wrap_angle_cost(0.0) == 0.0
    assert wrap_angle_cost(2.0 * math.pi) == pytest.approx(0.0, abs=1e-12)
    assert wrap_angle_cost(math.pi / 2.0) == pytest.approx(1.0)
    assert wrap_angle_cost(math.pi) == 1e6


def test_wrap_angle_cost_is_periodic():
    rng = np.random.default_rng(11)
    angles = rng.uniform(-3.0, 3.0, 200)
    for n in (-2, -1, 1, 3):
        np.testing.assert_allclose(wrap_angle_cost(angles + 2.0 * math.pi * n), wrap_angle_cost(angles), atol=1e-9, rtol=1e-9)


def test_wrap_angle_cost_is_monotone_on_half_turn():
    costs = wrap_angle_cost(np.linspace(0.0, math.pi - 0.1, 500))
    assert np.all(np.diff(costs) > 0.0)


def test_wrap_angle_cost_gradient_matches_finite_difference():
    angles = np.linspace(-2.5, 2.5, 41)
    step = 1e-6
    numeric = (wrap_angle_cost(angles + step) - wrap_angle_cost(angles - step)) / (2.0 * step)
    np.testing.assert_allclose(wrap_angle_cost_gradient(angles), numeric, rtol=1e-6, atol=1e-8)


def test_footprint_polygon_at_origin(footprint):
    polygon = footprint_polygon(Pose2.from_xyt(0.0, 0.0, 0.0), footprint)
    np.testing.assert_allclose(np.abs(polygon.vertices), 0.025)
    assert polygon.area == pytest.approx(0.0025)


def test_footprint_polygon_stays_ccw_for_any_pose(footprint):
    rng = np.random.default_rng(2)
    for heading in [math.pi, *rng.uniform(-math.pi, math.pi, 50)]:
        polygon = footprint_polygon(Pose2.from_xyt(*rng.uniform(-1.0, 1.0, 2), heading), footprint)
        assert polygon.area == pytest.approx(0.05 * 0.05)


def test_opening_triangle_at_origin(footprint):
    triangle = opening_triangle(Pose2.from_xyt(0.0, 0.0, 0.0), footprint)
    np.testing.assert_allclose(triangle.vertices, [[0.0, 0.0], [0.025, -0.025], [0.025, 0.025]])


def test_opening_triangle_is_ccw_for_any_pose(footprint):
    rng = np.random.default_rng(9)
    for _ in range(50):
        triangle = opening_triangle(Pose2.from_xyt(*rng.uniform(-1.0, 1.0, 2), rng.uniform(-math.pi, math.pi)), footprint)
        assert triangle.area == pytest.approx(0.025 * 0.025)


def test_projected_anchor_zero_position_lies_in_opening(footprint):
    opening_pose = Pose2.from_xyt(0.1, -0.2, 0.8)
    anchor_pose = opening_pose.compose(Pose2.from_xyt(0.05, 0.0, 0.0))
    head = transform_point(anchor_pose, footprint.head_offset(footprint.connection_offset("back")))
    assert np.all(pip_residuals(head, opening_triangle(opening_pose, footprint)) < 0.0)


def test_footprint_connection_points(footprint):
    assert footprint.connection_offset("front").x == pytest.approx(0.020)
    assert footprint.connection_offset("back").x == pytest.approx(-0.030)
    assert footprint.connection_offset("left") == Point2(0.0, 0.025)
    assert footprint.connection_offset("right") == Point2(0.0, -0.025)
    assert footprint.head_offset(footprint.connection_offset("back")).x == pytest.approx(-0.036)
    with pytest.raises(ValueError):
        footprint.connection_offset("top")


def test_footprint_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        RobotFootprint(half_width=0.0)
    with pytest.raises(ValueError):
        RobotFootprint(opening_depth=0.06)


def test_random_convex_polygon_is_valid():
    rng = np.random.default_rng(0)
    polygon = random_convex_polygon(rng, n_points=12, scale=2.0)
    assert 3 <= polygon.n_vertices <= 12
    assert polygon.area > 0.0
    with pytest.raises(ValueError):
        random_convex_polygon(rng, n_points=2)

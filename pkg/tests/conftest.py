"""Shared fixtures."""

import logging

import numpy as np
import pytest

from softanchor_swarm.coordination import PairRegistry, augment_pairs
from softanchor_swarm.geometry import ConvexPolygon, RobotFootprint
from softanchor_swarm.mpc import ConnectionPoint
from softanchor_swarm.settings import PACKAGE_LOGGER

# Robot 0 ahead of robot 1 with the anchor point on the opening point.
COUPLED_X = 0.05


@pytest.fixture(autouse=True)
def restore_package_logger():
    """Undo what ``configure_logging`` does to the package logger during a test."""
    yield
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def footprint() -> RobotFootprint:
    return RobotFootprint()


@pytest.fixture
def unit_square() -> ConvexPolygon:
    return ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


@pytest.fixture
def anchor_endpoints(footprint):
    """Back of robot 0 to front of robot 1."""
    return (
        ConnectionPoint(0, footprint.connection_offset("back")),
        ConnectionPoint(1, footprint.connection_offset("front")),
    )


@pytest.fixture
def anchor_registry(anchor_endpoints, footprint) -> PairRegistry:
    return PairRegistry(goal=augment_pairs([anchor_endpoints], footprint))


def make_states(*poses: tuple[float, ...]) -> np.ndarray:
    """Stack ``(px, py, theta[, v, w])`` tuples into an ``(N, 5)`` state array."""
    states = np.zeros((len(poses), 5))
    for row, pose in enumerate(poses):
        states[row, : len(pose)] = pose
    return states


@pytest.fixture
def coupled_states() -> np.ndarray:
    return make_states((COUPLED_X, 0.0, 0.0), (0.0, 0.0, 0.0))

"""Fuzz the half-plane membership test against ray casting."""

from collections.abc import Callable, Iterator
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from softanchor_swarm.configs.configs import DEFAULT_SEED
from softanchor_swarm.experiments.base import Experiment
from softanchor_swarm.geometry import ConvexPolygon, pip_residuals, random_convex_polygon, ray_cast_contains
from softanchor_swarm.items import PipDisagreementItem

ResidualFn = Callable[[ArrayLike, ConvexPolygon], NDArray[np.float64]]

POINT_RANGE = 1.5
MAX_HULL_POINTS = 12


class PipCheck(Experiment):
    """Random convex polygons and query points; every disagreement is yielded."""

    name = "pip-check"
    tables = (PipDisagreementItem,)

    def __init__(self, samples: int, seed: int = DEFAULT_SEED, residual_fn: ResidualFn = pip_residuals) -> None:
        """Describe the fuzzing run.

        Args:
            samples (int): Number of (polygon, point) cases.
            seed (int): Seed of the generator.
            residual_fn (ResidualFn): Residual function under test.
        """
        super().__init__(seed, workers=1)
        if samples < 1:
            raise ValueError(f"samples must be at least 1, got {samples}")
        self.samples = samples
        self.residual_fn = residual_fn
        self.checked = 0

    def parameters(self) -> dict[str, Any]:
        params = super().parameters()
        params.pop("checked", None)
        params["residual_fn"] = getattr(self.residual_fn, "__qualname__", type(self.residual_fn).__name__)
        return params

    def run(self) -> Iterator[PipDisagreementItem]:
        """Yield the counterexamples.

        Yields:
            PipDisagreementItem: A case where both tests disagree.
        """
        rng = np.random.default_rng(self.seed)
        self.checked = 0
        for sample in range(self.samples):
            polygon = random_convex_polygon(rng, n_points=int(rng.integers(3, MAX_HULL_POINTS + 1)))
            point = rng.uniform(-POINT_RANGE, POINT_RANGE, size=2)
            residual_inside = bool(np.all(self.residual_fn(point, polygon) <= 0.0))
            oracle_inside = ray_cast_contains(point, polygon)
            self.checked += 1
            if residual_inside != oracle_inside:
                self.logger.warning("Sample %d disagrees at (%.6f, %.6f)", sample, point[0], point[1])
                yield PipDisagreementItem(
                    sample=sample,
                    px=float(point[0]),
                    py=float(point[1]),
                    residual_inside=residual_inside,
                    oracle_inside=oracle_inside,
                    vertices=";".join(f"{x:.10g} {y:.10g}" for x, y in polygon.vertices),
                )
        self.logger.info("Checked %d sample(s)", self.checked)


def run_pip_check(samples: int, seed: int = DEFAULT_SEED, residual_fn: ResidualFn = pip_residuals) -> list[PipDisagreementItem]:
    """Every disagreement between the residual test and ray casting."""
    return list(PipCheck(samples, seed, residual_fn).run())

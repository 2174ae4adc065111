"""Common machinery of the experiments."""

import dataclasses
import hashlib
import json
import logging
from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from typing import Any, ClassVar, TypeVar

from softanchor_swarm.configs.configs import DEFAULT_SEED
from softanchor_swarm.pipelines import Record

T = TypeVar("T")
R = TypeVar("R")


class Experiment:
    """An experiment yields result records, the pipeline persists them.

    Subclasses set ``name`` and implement :meth:`run`. Trials are independent;
    with ``workers > 1`` they run in worker processes and come back in trial
    order, so aggregates do not depend on the worker count.
    """

    name: ClassVar[str] = "experiment"
    tables: ClassVar[tuple[type, ...]] = ()

    def __init__(self, seed: int = DEFAULT_SEED, workers: int = 1) -> None:
        """Keep the seed and the worker count.

        Args:
            seed (int): Base seed of every trial.
            workers (int): Worker processes; 1 runs in-process.
        """
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self.seed = seed
        self.workers = workers
        self.logger = logging.getLogger(f"{__name__}.{self.name}")

    def parameters(self) -> dict[str, Any]:
        """Settings that decide the records; the worker count does not."""
        params: dict[str, Any] = {"experiment": self.name}
        for key, value in vars(self).items():
            if key.startswith("_") or key in ("logger", "workers") or callable(value):
                continue
            params[key] = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else value
        return params

    @property
    def config_hash(self) -> str:
        """Sha256 over the canonical JSON of :meth:`parameters`."""
        canonical = json.dumps(self.parameters(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def run(self) -> Iterator[Record]:
        """Yield the result records of the experiment."""
        raise NotImplementedError

    def run_trials(self, trial: Callable[[T], R], jobs: Iterable[T]) -> list[R]:
        """Apply ``trial`` to every job, in order."""
        jobs = list(jobs)
        if self.workers == 1 or len(jobs) <= 1:
            return [trial(job) for job in jobs]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(trial, jobs))

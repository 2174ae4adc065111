"""Experiment harness: coupling, decoupling, timing and the membership self-check."""

from softanchor_swarm.experiments.base import Experiment
from softanchor_swarm.experiments.coupling import CouplingExperiment, run_coupling_experiment
from softanchor_swarm.experiments.decoupling import DecouplingExperiment, run_decoupling_experiment
from softanchor_swarm.experiments.pip_check import PipCheck, run_pip_check
from softanchor_swarm.experiments.timing import TimingBenchmark, run_timing_benchmark

__all__ = [
    "CouplingExperiment",
    "DecouplingExperiment",
    "Experiment",
    "PipCheck",
    "TimingBenchmark",
    "run_coupling_experiment",
    "run_decoupling_experiment",
    "run_pip_check",
    "run_timing_benchmark",
]

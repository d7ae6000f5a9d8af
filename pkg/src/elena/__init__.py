"""Epigenetic evolutionary solvers for TSP, capacitated VRP and maximum clique."""

from .engine import RunResult, evolve
from .genome import EpigeneticTags, Genome, Kind, SolverConfig, preset, split_stream
from .problems import McpInstance, Metric, TspInstance, VrpInstance

__all__ = [
    "EpigeneticTags",
    "Genome",
    "Kind",
    "McpInstance",
    "Metric",
    "RunResult",
    "SolverConfig",
    "TspInstance",
    "VrpInstance",
    "evolve",
    "preset",
    "split_stream",
]

__version__ = "0.1.0"

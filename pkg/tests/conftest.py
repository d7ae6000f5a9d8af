import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from elena.genome import Genome, Kind, SolverConfig
from elena.problems import McpInstance, TspInstance

DATA = Path(__file__).parent / "data"


def brute_force_tour(instance: TspInstance) -> float:
    """Exhaustive optimum, fixing city 0 as the start."""
    n = instance.size
    if n < 3:
        return 2 * instance.distances[0, 1] if n == 2 else 0.0
    d = instance.distances
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        tour = (0,) + perm
        length = sum(d[tour[k - 1], tour[k]] for k in range(n))
        best = min(best, length)
    return best


def brute_force_max_clique(instance: McpInstance) -> int:
    """Enumerate every clique by extending with higher-numbered neighbours."""
    nbrs = instance.neighbors
    best = 0

    def extend(size, candidates):
        nonlocal best
        best = max(best, size)
        for k, v in enumerate(candidates):
            extend(size + 1, [u for u in candidates[k + 1:] if u in nbrs[v]])

    extend(0, list(range(instance.vertex_count)))
    return best


def permutation_genome(seq, tags=None):
    n = len(seq)
    if tags is None:
        tags = np.tile([0.5, 0.7, 0.5], (n, 1))
    return Genome(tuple(seq), np.asarray(tags, dtype=float), Kind.PERMUTATION)


@pytest.fixture
def config():
    return SolverConfig()


@pytest.fixture
def unit_square():
    return TspInstance(((0, 0), (1, 0), (1, 1), (0, 1)))


@pytest.fixture
def path_graph():
    return McpInstance(3, [(0, 1), (1, 2)])


@pytest.fixture
def k4():
    return McpInstance(4, itertools.combinations(range(4), 2))

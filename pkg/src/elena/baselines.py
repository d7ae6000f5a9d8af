"""Reference heuristics: nearest neighbour, best-improvement 2-opt,
simulated annealing and a greedy clique builder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .genome import IMPROVEMENT_TOL
from .operators import apply_insert
from .problems import (
    McpInstance,
    RouteCost,
    TourLength,
    TspInstance,
    VrpInstance,
    expansion_candidates,
)


@dataclass(frozen=True)
class SaSchedule:
    initial_temperature: float = 1.0
    cooling_rate: float = 0.995
    iterations_per_temperature: int = 100
    minimum_temperature: float = 1e-4

    def __post_init__(self):
        if self.initial_temperature <= 0 or self.minimum_temperature <= 0:
            raise ValueError("temperatures must be positive")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.iterations_per_temperature < 1:
            raise ValueError("iterations_per_temperature must be positive")

    def temperatures(self):
        t = self.initial_temperature
        while t >= self.minimum_temperature:
            yield t
            t *= self.cooling_rate


def objective_for(instance) -> Callable:
    if isinstance(instance, TspInstance):
        return TourLength(instance)
    if isinstance(instance, VrpInstance):
        return RouteCost(instance)
    raise TypeError(f"no permutation objective for {type(instance).__name__}")


def _nearest_order(d: np.ndarray, start: int, candidates: list[int]) -> list[int]:
    remaining = list(candidates)
    order = []
    current = start
    while remaining:
        # min() keeps the first of equal distances, i.e. the lowest index
        nxt = min(remaining, key=lambda c: d[current, c])
        order.append(nxt)
        remaining.remove(nxt)
        current = nxt
    return order


def nearest_neighbor_tour(instance: TspInstance, start: int = 0) -> list[int]:
    if not 0 <= start < instance.size:
        raise ValueError("start city out of range")
    rest = [c for c in range(instance.size) if c != start]
    return [start] + _nearest_order(instance.distances, start, rest)


def nearest_neighbor_routes(instance: VrpInstance) -> list[int]:
    """Customer permutation built by nearest neighbour from the depot; the
    greedy split of this giant tour is the VRP baseline."""
    nodes = list(instance.customers)
    order = _nearest_order(instance.distances, instance.depot, nodes)
    position = {node: k for k, node in enumerate(instance.customers)}
    return [position[node] for node in order]


def best_improvement_two_opt(sequence: Sequence[int], objective) -> list[int]:
    seq = np.asarray(sequence, dtype=np.intp)
    if len(seq) < 3:
        return seq.tolist()
    current = objective(seq.tolist())
    while True:
        values = objective.reversal_scan(seq)
        flat = int(np.argmin(values))
        if not values.flat[flat] < current - IMPROVEMENT_TOL:
            return seq.tolist()
        i, j = divmod(flat, len(seq))
        seq[i:j + 1] = seq[i:j + 1][::-1]
        current = objective(seq.tolist())


def full_two_opt(instance, tour: Sequence[int]) -> list[int]:
    """Best-improvement 2-opt: apply the single best reversal per pass until
    none improves.  Unlike the engine's local search this scans the whole
    neighbourhood before each move."""
    return best_improvement_two_opt(tour, objective_for(instance))


def acceptance_probability(delta: float, temperature: float) -> float:
    if delta <= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(-delta / temperature)


def simulated_annealing(instance, schedule: SaSchedule, rng: np.random.Generator,
                        initial: Sequence[int] | None = None) -> tuple[list[int], float]:
    """Metropolis search over reversal and relocate moves on a permutation.

    Returns the best permutation visited and its objective.
    """
    objective = objective_for(instance)
    n = instance.size
    current = list(initial) if initial is not None else [int(x) for x in rng.permutation(n)]
    value = objective(current)
    best, best_value = list(current), value
    if n < 3:
        return best, best_value
    for temperature in schedule.temperatures():
        for _ in range(schedule.iterations_per_temperature):
            i, j = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
            if rng.random() < 0.5:
                cand = current[:i] + current[i:j + 1][::-1] + current[j + 1:]
            else:
                cand = apply_insert(current, i, j)
            cand_value = objective(cand)
            if rng.random() < acceptance_probability(cand_value - value, temperature):
                current, value = cand, cand_value
                if value < best_value:
                    best, best_value = list(current), value
    return best, best_value


def greedy_clique(instance: McpInstance) -> list[int]:
    if instance.vertex_count == 0:
        return []
    degrees = instance.degrees
    clique = [int(np.argmax(degrees))]
    while True:
        cand = expansion_candidates(instance, clique)
        if not cand:
            return sorted(clique)
        # candidates come sorted by descending degree, lowest id first
        clique.append(cand[0])

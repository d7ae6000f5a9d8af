"""TSP, capacitated VRP and maximum clique bindings for the engine.

Each ``*Problem`` class exposes the small surface the evolution loop needs:
an objective over sequences, random initial genomes, a ``breed`` step that
produces one locally improved offspring, a ``transfer`` step for gene
transfer and a validity check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .genome import (
    CA,
    EPSILON,
    IMPROVEMENT_TOL,
    MR,
    SS,
    Genome,
    InvalidInstanceError,
    Kind,
    SolverConfig,
    new_genome,
    update_tag,
)
from .operators import (
    apply_tag_feedback,
    choose_segment,
    first_improvement_two_opt,
    mutate_with_footprint,
    order_crossover,
    update_crossover_affinity,
)

# objective floor for VRP genomes whose greedy split runs out of vehicles;
# unserved demand is added on top so infeasible genomes still rank among themselves
INFEASIBLE = 1e12


class Metric(enum.Enum):
    REAL = "real"
    ROUNDED = "rounded"


def distance_matrix(coords: np.ndarray, metric: Metric) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    if metric is Metric.ROUNDED:
        d = np.floor(d + 0.5)
    return d


def _as_coords(coordinates) -> tuple[tuple[float, float], ...]:
    coords = tuple((float(x), float(y)) for x, y in coordinates)
    if not all(math.isfinite(v) for c in coords for v in c):
        raise InvalidInstanceError("coordinates must be finite")
    return coords


@dataclass(frozen=True)
class TspInstance:
    coordinates: tuple[tuple[float, float], ...]
    metric: Metric = Metric.REAL
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coordinates", _as_coords(self.coordinates))
        if not self.coordinates:
            raise InvalidInstanceError("a TSP instance needs at least one city")

    @property
    def size(self) -> int:
        return len(self.coordinates)

    @cached_property
    def distances(self) -> np.ndarray:
        return distance_matrix(np.array(self.coordinates), self.metric)


@dataclass(frozen=True)
class VrpInstance:
    """Capacitated VRP.  ``coordinates`` and ``demands`` cover every node,
    depot included; customers are the remaining nodes in index order."""

    coordinates: tuple[tuple[float, float], ...]
    demands: tuple[int, ...]
    capacity: int
    vehicle_count: int
    depot: int = 0
    metric: Metric = Metric.REAL
    name: str = ""
    best_known: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "coordinates", _as_coords(self.coordinates))
        object.__setattr__(self, "demands", tuple(int(d) for d in self.demands))
        if len(self.demands) != len(self.coordinates):
            raise InvalidInstanceError("one demand per node is required")
        if not 0 <= self.depot < len(self.coordinates):
            raise InvalidInstanceError("depot index out of range")
        if self.capacity < 1 or self.vehicle_count < 1:
            raise InvalidInstanceError("capacity and vehicle count must be positive")
        if any(d < 0 for d in self.demands):
            raise InvalidInstanceError("demands must be non-negative")
        if any(self.demands[c] > self.capacity for c in self.customers):
            raise InvalidInstanceError("a single customer demand exceeds vehicle capacity")

    @cached_property
    def customers(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.coordinates)) if i != self.depot)

    @property
    def size(self) -> int:
        return len(self.customers)

    @property
    def total_demand(self) -> int:
        return sum(self.demands[c] for c in self.customers)

    @property
    def demand_fits(self) -> bool:
        return self.total_demand <= self.vehicle_count * self.capacity

    @cached_property
    def distances(self) -> np.ndarray:
        return distance_matrix(np.array(self.coordinates), self.metric)


class McpInstance:
    """Simple undirected graph on vertices ``0..vertex_count-1``."""

    def __init__(self, vertex_count: int, edges: Iterable[tuple[int, int]] = (), name: str = ""):
        if vertex_count < 0:
            raise InvalidInstanceError("vertex count must be non-negative")
        self.vertex_count = int(vertex_count)
        self.name = name
        adj = np.zeros((vertex_count, vertex_count), dtype=bool)
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < vertex_count and 0 <= v < vertex_count):
                raise InvalidInstanceError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise InvalidInstanceError(f"self-loop on vertex {u}")
            adj[u, v] = adj[v, u] = True
        adj.setflags(write=False)
        self.adjacency = adj
        self.neighbors = tuple(frozenset(np.flatnonzero(row).tolist()) for row in adj)
        self.degrees = adj.sum(axis=1)

    @property
    def size(self) -> int:
        return self.vertex_count

    @property
    def edges(self) -> list[tuple[int, int]]:
        us, vs = np.nonzero(np.triu(self.adjacency))
        return list(zip(us.tolist(), vs.tolist()))

    def __eq__(self, other):
        if not isinstance(other, McpInstance):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __repr__(self):
        return f"McpInstance(vertex_count={self.vertex_count}, edges={len(self.edges)})"


# --- TSP -------------------------------------------------------------------

def tour_length(instance: TspInstance, permutation: Sequence[int]) -> float:
    if len(permutation) < 2:
        return 0.0
    d = instance.distances
    total = 0.0
    for k in range(len(permutation)):
        total += d[permutation[k - 1], permutation[k]]
    return float(total)


class TourLength:
    """Closed-tour objective with a vectorized 2-opt neighbourhood scan."""

    def __init__(self, instance: TspInstance):
        self.instance = instance
        self.d = instance.distances

    def __call__(self, seq) -> float:
        return tour_length(self.instance, seq)

    def reversal_scan(self, seq: np.ndarray) -> np.ndarray:
        n = len(seq)
        d = self.d
        base = self(seq)
        prev, nxt = np.roll(seq, 1), np.roll(seq, -1)
        a, b = prev[:, None], seq[:, None]
        c, e = seq[None, :], nxt[None, :]
        delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
        out = base + delta
        i, j = np.indices((n, n))
        # whole-tour reversal is the same cycle
        out[(j <= i) | ((i == 0) & (j == n - 1))] = np.inf
        return out


# --- VRP -------------------------------------------------------------------

class InfeasibleDecoding(Exception):
    """The greedy split needed more vehicles than the instance provides."""

    def __init__(self, unserved_demand: int):
        super().__init__(f"vehicles exhausted with {unserved_demand} demand unserved")
        self.unserved_demand = unserved_demand


@dataclass
class RouteSet:
    routes: list[list[int]] = field(default_factory=list)
    loads: list[int] = field(default_factory=list)


def decode_routes(instance: VrpInstance, permutation: Sequence[int]) -> RouteSet:
    """Greedy sequential split of a customer permutation into vehicle routes.

    Route entries are customer indices (positions in ``instance.customers``).
    """
    demands = [instance.demands[c] for c in instance.customers]
    result = RouteSet()
    for pos, cust in enumerate(permutation):
        dem = demands[cust]
        if not result.routes or result.loads[-1] + dem > instance.capacity:
            if len(result.routes) == instance.vehicle_count:
                unserved = sum(demands[c] for c in permutation[pos:])
                raise InfeasibleDecoding(unserved)
            result.routes.append([])
            result.loads.append(0)
        result.routes[-1].append(int(cust))
        result.loads[-1] += dem
    return result


def vrp_cost(instance: VrpInstance, routes: RouteSet) -> float:
    d = instance.distances
    depot = instance.depot
    total = 0.0
    for route in routes.routes:
        prev = depot
        for cust in route:
            node = instance.customers[cust]
            total += d[prev, node]
            prev = node
        if route:
            total += d[prev, depot]
    return float(total)


class RouteCost:
    """VRP objective over customer permutations.

    Infeasible splits map to ``INFEASIBLE + unserved demand``, which ranks
    below every feasible genome while still grading infeasible ones.
    """

    def __init__(self, instance: VrpInstance):
        self.instance = instance
        nodes = np.array(instance.customers, dtype=np.intp)
        self.nodes = nodes
        self.dem = np.array([instance.demands[c] for c in instance.customers], dtype=np.int64)
        self.d = instance.distances
        self._pairs: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __call__(self, seq) -> float:
        try:
            return vrp_cost(self.instance, decode_routes(self.instance, seq))
        except InfeasibleDecoding as exc:
            return INFEASIBLE + exc.unserved_demand

    def _pair_index(self, n: int):
        if n not in self._pairs:
            ii, jj = np.triu_indices(n, k=1)
            k = np.arange(n)[None, :]
            inside = (k >= ii[:, None]) & (k <= jj[:, None])
            idx = np.where(inside, ii[:, None] + jj[:, None] - k, k)
            self._pairs[n] = (ii, jj, idx)
        return self._pairs[n]

    def batch(self, candidates: np.ndarray) -> np.ndarray:
        """Objective of every row of a ``(P, n)`` array of permutations."""
        inst = self.instance
        d, depot, cap = self.d, inst.depot, inst.capacity
        rows = candidates.shape[0]
        cost = np.zeros(rows)
        load = np.zeros(rows, dtype=np.int64)
        used = np.zeros(rows, dtype=np.int64)
        unserved = np.zeros(rows, dtype=np.int64)
        prev = np.full(rows, depot, dtype=np.intp)
        for k in range(candidates.shape[1]):
            cust = candidates[:, k]
            dem = self.dem[cust]
            node = self.nodes[cust]
            new_route = (used == 0) | (load + dem > cap)
            dead = new_route & (used >= inst.vehicle_count) | (unserved > 0)
            new_route &= ~dead
            unserved += np.where(dead, dem, 0)
            cost += np.where(new_route, d[prev, depot], 0.0)
            prev = np.where(new_route, depot, prev)
            load = np.where(new_route, 0, load)
            used += new_route
            live = ~dead
            cost += np.where(live, d[prev, node], 0.0)
            load += np.where(live, dem, 0)
            prev = np.where(live, node, prev)
        cost += d[prev, depot]
        return np.where(unserved > 0, INFEASIBLE + unserved, cost)

    def reversal_scan(self, seq: np.ndarray) -> np.ndarray:
        n = len(seq)
        ii, jj, idx = self._pair_index(n)
        out = np.full((n, n), np.inf)
        out[ii, jj] = self.batch(seq[idx])
        return out


# --- MCP -------------------------------------------------------------------

def is_clique(instance: McpInstance, vertices: Iterable[int]) -> bool:
    vs = list(vertices)
    if len(set(vs)) != len(vs):
        return False
    sub = instance.adjacency[np.ix_(vs, vs)]
    return bool(sub.sum() == len(vs) * (len(vs) - 1))


def mcp_objective(genome: Genome) -> float:
    return -float(len(genome.sequence))


def _phase1_repair(instance: McpInstance, vertices: Iterable[int]) -> list[int]:
    current = sorted(set(vertices))
    nbrs = instance.neighbors
    changed = True
    while changed:
        changed = False
        members = set(current)
        for v in list(current):
            if v not in members:
                continue
            if any(u != v and u not in nbrs[v] for u in members):
                members.discard(v)
                changed = True
        current = sorted(members)
    return current


def expansion_candidates(instance: McpInstance, clique: Iterable[int]) -> list[int]:
    members = set(clique)
    if members:
        common = np.logical_and.reduce(instance.adjacency[sorted(members)], axis=0)
    else:
        common = np.ones(instance.vertex_count, dtype=bool)
    cand = [int(v) for v in np.flatnonzero(common) if v not in members]
    return sorted(cand, key=lambda v: (-int(instance.degrees[v]), v))


def clique_improve(instance: McpInstance, genome: Genome, config: SolverConfig) -> Genome:
    """Repair a vertex set into a clique, update vertex memory, then expand.

    Conflicting vertices are dropped in ascending id order until the set is
    a clique.  If that kept the set at least as large as it was, the
    survivors' stability and mutation resistance rise, otherwise they
    fall.  Outside vertices adjacent to every member are then added
    greedily by descending degree.
    """
    initial = set(genome.sequence)
    valid = _phase1_repair(instance, initial)
    success = len(valid) >= len(initial)
    tags = genome.tags.copy()
    for v in valid:
        tags[v, SS] = update_tag(tags[v, SS], success, config.delta_ss)
        tags[v, MR] = update_tag(tags[v, MR], success, config.delta_mr)
    clique = list(valid)
    nbrs = instance.neighbors
    for v in expansion_candidates(instance, valid):
        if all(u in nbrs[v] for u in clique):
            clique.append(v)
    return Genome(tuple(sorted(clique)), tags, Kind.VERTEX_SET)


MCP_OPERATORS = ("swap", "insert", "remove", "local_search")


def _removal_weights(instance: McpInstance, genome: Genome, members: list[int]) -> np.ndarray:
    deg = instance.degrees[members].astype(float)
    top = max(1.0, float(instance.degrees.max()))
    w = (1.0 - genome.tags[members, MR]) + EPSILON
    # small low-degree bonus only separates otherwise equal weights
    w = w * (1.0 + EPSILON * (top - deg) / top)
    return w / w.sum()


def mcp_mutate(instance: McpInstance, genome: Genome, rng: np.random.Generator,
               config: SolverConfig, operator: str | None = None) -> Genome:
    members = sorted(genome.sequence)
    if not members:
        operator = "insert"
    elif operator is None:
        operator = MCP_OPERATORS[int(rng.integers(len(MCP_OPERATORS)))]

    if operator == "local_search":
        return clique_improve(instance, genome, config)
    if operator == "insert":
        if not members:
            return genome.with_sequence([int(rng.integers(instance.vertex_count))])
        cand = expansion_candidates(instance, members)
        if not cand:
            return genome
        v = cand[int(rng.integers(len(cand)))]
        return genome.with_sequence(sorted(members + [v]))
    if operator == "remove":
        idx = int(rng.choice(len(members), p=_removal_weights(instance, genome, members)))
        return genome.with_sequence(members[:idx] + members[idx + 1:])
    if operator == "swap":
        idx = int(rng.choice(len(members), p=_removal_weights(instance, genome, members)))
        out = members[idx]
        rest = members[:idx] + members[idx + 1:]
        cand = [v for v in expansion_candidates(instance, rest) if v != out]
        if not cand:
            return genome
        v = cand[int(rng.integers(len(cand)))]
        return genome.with_sequence(sorted(rest + [v]))
    raise ValueError(f"unknown MCP operator {operator!r}")


# --- random instances ------------------------------------------------------

def random_tsp(n: int, seed: int, metric: Metric = Metric.REAL) -> TspInstance:
    if n < 1:
        raise InvalidInstanceError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return TspInstance(tuple(map(tuple, rng.random((n, 2)))), metric, name=f"tsp-n{n}-s{seed}")


def random_vrp(n: int, seed: int, capacity: int = 30, vehicles: int = 2,
               demand: tuple[int, int] = (1, 10), metric: Metric = Metric.REAL) -> VrpInstance:
    """``n`` customers plus a depot at node 0, all uniform in the unit square."""
    if n < 0:
        raise InvalidInstanceError("n must be non-negative")
    rng = np.random.default_rng(seed)
    coords = tuple(map(tuple, rng.random((n + 1, 2))))
    lo, hi = demand
    dem = (0,) + tuple(int(x) for x in rng.integers(lo, hi + 1, size=n))
    return VrpInstance(coords, dem, capacity, vehicles, depot=0, metric=metric,
                       name=f"vrp-n{n}-k{vehicles}-s{seed}")


def random_mcp(n: int, seed: int, p: float = 0.5) -> McpInstance:
    if n < 1:
        raise InvalidInstanceError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidInstanceError("edge probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    ii, jj = np.triu_indices(n, k=1)
    keep = rng.random(len(ii)) < p
    return McpInstance(n, zip(ii[keep].tolist(), jj[keep].tolist()), name=f"mcp-n{n}-p{p}-s{seed}")


def random_instance(kind: str, seed: int, n: int, **params):
    if kind == "tsp":
        return random_tsp(n, seed, **params)
    if kind == "vrp":
        return random_vrp(n, seed, **params)
    if kind == "mcp":
        return random_mcp(n, seed, **params)
    raise ValueError(f"unknown problem kind {kind!r}")


# --- engine adapters -------------------------------------------------------

@dataclass
class Individual:
    genome: Genome
    objective: float


class PermutationProblem:
    kind = Kind.PERMUTATION

    def __init__(self, instance, objective):
        self.instance = instance
        self.objective = objective
        self.size = instance.size

    def random_genome(self, rng, config: SolverConfig) -> Genome:
        return new_genome(self.size, Kind.PERMUTATION, config.initial_tags, rng)

    def evaluate(self, genome: Genome) -> float:
        return float(self.objective(genome.sequence))

    def breed(self, a: Individual, b: Individual, rng, config: SolverConfig) -> Individual:
        segment = choose_segment(a.genome, rng, config)
        child = order_crossover(a.genome, b.genome, rng, config, segment=segment)
        segment_lps = a.genome.sequence[segment.start:segment.stop]
        child, moved = mutate_with_footprint(child, config.initial_mutation_rate, rng, config)
        seq, improvement, touched = first_improvement_two_opt(child.sequence, self.objective)
        child = child.with_sequence(seq)
        if improvement > 0:
            child = apply_tag_feedback(child, touched, improvement, config)
        else:
            # local search found nothing: the mutated LPs take the blame
            child = apply_tag_feedback(child, moved, 0.0, config)
        value = self.evaluate(child)
        improved = value < (a.objective + b.objective) / 2.0 - IMPROVEMENT_TOL
        child = update_crossover_affinity(child, segment_lps, improved, config)
        return Individual(child, value)

    def transfer(self, recipient: Genome, lps: Sequence[int], rng, config: SolverConfig) -> Genome:
        from .engine import insert_segment
        return insert_segment(recipient, lps, rng)

    def is_valid(self, genome: Genome) -> bool:
        return genome.is_valid() and genome.tags_in_range()

    def report(self, genome: Genome) -> float:
        return self.evaluate(genome)


class TspProblem(PermutationProblem):
    def __init__(self, instance: TspInstance):
        super().__init__(instance, TourLength(instance))


class VrpProblem(PermutationProblem):
    def __init__(self, instance: VrpInstance):
        super().__init__(instance, RouteCost(instance))
        if instance.size == 0:
            self.size = 0

    def random_genome(self, rng, config: SolverConfig) -> Genome:
        if self.size == 0:
            return Genome((), np.zeros((0, 3)), Kind.PERMUTATION)
        return super().random_genome(rng, config)


class McpProblem:
    kind = Kind.VERTEX_SET

    def __init__(self, instance: McpInstance):
        self.instance = instance
        self.size = instance.vertex_count

    def random_genome(self, rng, config: SolverConfig) -> Genome:
        return new_genome(self.size, Kind.VERTEX_SET, config.initial_tags, rng)

    def objective(self, seq) -> float:
        return -float(len(seq))

    def evaluate(self, genome: Genome) -> float:
        return mcp_objective(genome)

    def crossover(self, a: Genome, b: Genome, rng) -> tuple[Genome, list[int]]:
        """Keep ``a``'s clique and pull in each extra vertex of ``b`` with
        probability given by its crossover affinity; the union may need repair."""
        tags = (a.tags + b.tags) / 2.0
        kept = list(a.sequence)
        extra = sorted(set(b.sequence) - set(kept))
        if extra:
            p = np.clip(tags[extra, CA], EPSILON, 1.0)
            take = rng.random(len(extra)) < p
            kept += [v for v, t in zip(extra, take) if t]
        return Genome(tuple(sorted(kept)), tags, Kind.VERTEX_SET), list(a.sequence)

    def breed(self, a: Individual, b: Individual, rng, config: SolverConfig) -> Individual:
        child, segment_lps = self.crossover(a.genome, b.genome, rng)
        child = clique_improve(self.instance, child, config)
        if rng.random() < config.initial_mutation_rate:
            child = mcp_mutate(self.instance, child, rng, config)
        value = self.evaluate(child)
        improved = value < (a.objective + b.objective) / 2.0 - IMPROVEMENT_TOL
        child = update_crossover_affinity(child, segment_lps, improved, config)
        return Individual(child, value)

    def transfer(self, recipient: Genome, lps: Sequence[int], rng, config: SolverConfig) -> Genome:
        merged = recipient.with_sequence(sorted(set(recipient.sequence) | set(lps)))
        return clique_improve(self.instance, merged, config)

    def is_valid(self, genome: Genome) -> bool:
        return genome.is_valid() and genome.tags_in_range() and is_clique(self.instance, genome.sequence)

    def report(self, genome: Genome) -> float:
        return float(len(genome.sequence))


def make_problem(instance):
    if isinstance(instance, TspInstance):
        return TspProblem(instance)
    if isinstance(instance, VrpInstance):
        return VrpProblem(instance)
    if isinstance(instance, McpInstance):
        return McpProblem(instance)
    raise TypeError(f"unsupported instance type {type(instance).__name__}")

"""Genomes, epigenetic tags, solver configuration and seeded random streams.

Tags are stored as a flat ``(n, 3)`` float array indexed by LP identifier,
so a city or vertex carries its history with it wherever it moves in the
sequence.  Column order is mutation resistance, crossover affinity,
stability score.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MR, CA, SS = 0, 1, 2

# additive floor for every tag-weighted sampling distribution
EPSILON = 0.01
# strict-improvement tolerance shared by all local searches
IMPROVEMENT_TOL = 1e-9


class InvalidInstanceError(ValueError):
    """Raised for malformed or degenerate problem instances."""


class ConfigError(ValueError):
    """Raised when a SolverConfig fails validation."""


class Kind(enum.Enum):
    PERMUTATION = "permutation"
    VERTEX_SET = "vertex_set"


@dataclass(frozen=True)
class EpigeneticTags:
    mutation_resistance: float = 0.5
    crossover_affinity: float = 0.7
    stability_score: float = 0.5

    def __post_init__(self):
        for name in ("mutation_resistance", "crossover_affinity", "stability_score"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.mutation_resistance, self.crossover_affinity, self.stability_score],
            dtype=float,
        )


@dataclass(frozen=True, eq=False)
class Genome:
    """An ordered sequence of LP identifiers plus per-LP tag storage.

    ``tags`` always has one row per LP in the universe, including LPs that
    are absent from a vertex-set sequence.
    """

    sequence: tuple[int, ...]
    tags: np.ndarray
    kind: Kind = Kind.PERMUTATION

    @property
    def size(self) -> int:
        return self.tags.shape[0]

    def with_sequence(self, sequence: Iterable[int]) -> "Genome":
        return Genome(tuple(int(x) for x in sequence), self.tags.copy(), self.kind)

    def with_tags(self, tags: np.ndarray) -> "Genome":
        return Genome(self.sequence, tags, self.kind)

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.sequence == other.sequence
            and np.array_equal(self.tags, other.tags)
        )

    def __hash__(self):
        return hash((self.kind, self.sequence, self.tags.tobytes()))

    def is_valid(self) -> bool:
        if self.kind is Kind.PERMUTATION:
            return sorted(self.sequence) == list(range(self.size))
        return len(set(self.sequence)) == len(self.sequence) and all(
            0 <= v < self.size for v in self.sequence
        )

    def tags_in_range(self) -> bool:
        return bool(np.all((self.tags >= 0.0) & (self.tags <= 1.0)))


@dataclass(frozen=True)
class SolverConfig:
    population_size: int = 15
    subpopulation_count: int = 4
    initial_mutation_rate: float = 0.2
    initial_tags: EpigeneticTags = field(default_factory=EpigeneticTags)
    delta_mr: float = 0.05
    delta_ss: float = 0.05
    delta_ca: float = 0.05
    hgt_period: int = 5
    hgt_probability: float = 0.1
    stability_threshold: float = 0.7
    min_segment_length: int = 2
    elitism_fraction: float = 0.1
    patience: int = 50
    max_generations: int = 500
    master_seed: int = 0
    workers: int = 1

    def validate(self) -> "SolverConfig":
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for name in ("population_size", "subpopulation_count", "hgt_period",
                     "min_segment_length", "patience", "max_generations", "workers"):
            value = getattr(self, name)
            check(isinstance(value, (int, np.integer)) and value >= 1,
                  f"{name} must be a positive integer, got {value!r}")
        check(self.population_size >= self.subpopulation_count,
              "population_size must be at least subpopulation_count")
        check(0.0 < self.initial_mutation_rate <= 1.0,
              "initial_mutation_rate must lie in (0, 1]")
        for name in ("delta_mr", "delta_ss", "delta_ca"):
            check(0.0 < getattr(self, name) < 1.0, f"{name} must lie in (0, 1)")
        for name in ("hgt_probability", "stability_threshold", "elitism_fraction"):
            check(0.0 <= getattr(self, name) <= 1.0, f"{name} must lie in [0, 1]")
        check(0 <= self.master_seed < 2**64, "master_seed must be a 64-bit unsigned integer")
        return self

    def subpopulation_sizes(self) -> list[int]:
        base, extra = divmod(self.population_size, self.subpopulation_count)
        return [base + (1 if i < extra else 0) for i in range(self.subpopulation_count)]

    def elite_count(self, subpop_size: int) -> int:
        return max(1, round(self.elitism_fraction * subpop_size))

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        # worker count never changes results, so it stays out of the digest
        data.pop("workers")
        return data

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        if isinstance(data.get("initial_tags"), dict):
            data["initial_tags"] = EpigeneticTags(**data["initial_tags"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


PRESETS = {
    "elena-15-0.2": dict(population_size=15, initial_mutation_rate=0.2),
    "elena-50-0.5": dict(population_size=50, initial_mutation_rate=0.5),
    "elena-300-0.5": dict(population_size=300, initial_mutation_rate=0.5),
}


def preset(name: str, **overrides) -> SolverConfig:
    try:
        params = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    params.update(overrides)
    return SolverConfig(**params).validate()


def split_stream(master_seed: int, labels: Sequence[int]) -> np.random.Generator:
    """Independent generator for the label path under ``master_seed``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(x) for x in labels))
    return np.random.Generator(np.random.PCG64(seq))


def new_genome(n: int, kind: Kind, initial_tags: EpigeneticTags,
               rng: np.random.Generator) -> Genome:
    if n < 1:
        raise InvalidInstanceError("LP universe must contain at least one element")
    tags = np.tile(initial_tags.as_array(), (n, 1))
    if kind is Kind.PERMUTATION:
        sequence = tuple(int(x) for x in rng.permutation(n))
    else:
        sequence = (int(rng.integers(n)),)
    return Genome(sequence, tags, kind)


def update_tag(value: float, increase: bool, step: float) -> float:
    if increase:
        return min(1.0, value + step)
    return max(0.0, value - step)


@functools.total_ordering
@dataclass(frozen=True)
class SelectionKey:
    """Rank of a genome: objective first, then higher mean stability,
    then lexicographic sequence order."""

    objective: float
    mean_stability: float
    sequence: tuple[int, ...] = ()

    def _rank(self):
        return (self.objective, -self.mean_stability, self.sequence)

    def __lt__(self, other: "SelectionKey") -> bool:
        return self._rank() < other._rank()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SelectionKey):
            return NotImplemented
        return self._rank() == other._rank()

    def __hash__(self):
        return hash(self._rank())


def mean_stability(genome: Genome) -> float:
    if not genome.sequence:
        return 0.0
    return float(genome.tags[list(genome.sequence), SS].mean())


def selection_key(genome: Genome, objective: float) -> SelectionKey:
    if not np.isfinite(objective):
        raise ValueError("objective must be finite")
    return SelectionKey(float(objective), mean_stability(genome), genome.sequence)

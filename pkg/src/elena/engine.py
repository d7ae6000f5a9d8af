"""Island-model evolutionary loop with epigenetic gene transfer.

Every subpopulation draws from its own stream, derived from the master seed,
the generation and the island index, so results do not depend on how many
worker processes evolve the islands.  Gene transfer and best-so-far
bookkeeping happen serially at a barrier after each generation.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .genome import (
    IMPROVEMENT_TOL,
    SS,
    Genome,
    Kind,
    SelectionKey,
    SolverConfig,
    selection_key,
    split_stream,
)
from .problems import Individual, make_problem

log = logging.getLogger(__name__)

TOURNAMENT_SIZE = 3

# stream label prefixes
_INIT, _GENERATION, _HGT = 0, 1, 2


@dataclass
class Subpopulation:
    index: int
    members: list[Individual]
    rng: np.random.Generator | None = None


@dataclass(frozen=True)
class StableSegment:
    lps: tuple[int, ...]
    source_subpop: int = -1
    mean_stability: float = 0.0


@dataclass
class RunResult:
    best_genome: Genome
    best_objective: float
    trajectory: list[float]
    generations_run: int
    last_improvement_generation: int
    wall_time: float = 0.0
    hgt_generations: list[int] = field(default_factory=list)
    hgt_transfers: int = 0
    solution_value: float = 0.0

    def same_outcome(self, other: "RunResult") -> bool:
        """Equality on everything except wall time."""
        return (
            self.best_genome == other.best_genome
            and self.best_objective == other.best_objective
            and self.trajectory == other.trajectory
            and self.generations_run == other.generations_run
            and self.last_improvement_generation == other.last_improvement_generation
            and self.hgt_generations == other.hgt_generations
            and self.hgt_transfers == other.hgt_transfers
        )


def key_of(ind: Individual) -> SelectionKey:
    return selection_key(ind.genome, ind.objective)


def extract_stable_segments(genome: Genome, config: SolverConfig,
                            source_subpop: int = -1) -> list[StableSegment]:
    """Maximal runs of consecutive positions whose LPs are all stable enough."""
    seq = genome.sequence
    stable = [genome.tags[lp, SS] >= config.stability_threshold for lp in seq]
    segments = []
    start = None
    for pos, ok in enumerate(stable + [False]):
        if ok and start is None:
            start = pos
        elif not ok and start is not None:
            if pos - start >= config.min_segment_length:
                lps = seq[start:pos]
                segments.append(StableSegment(
                    lps, source_subpop, float(genome.tags[list(lps), SS].mean())))
            start = None
    return segments


def insert_segment(recipient: Genome, segment: StableSegment | Sequence[int],
                   rng: np.random.Generator | None = None, point: int | None = None) -> Genome:
    """Remove the segment's LPs from ``recipient`` and splice them back in,
    contiguously, at a uniformly drawn insertion point."""
    lps = tuple(segment.lps if isinstance(segment, StableSegment) else segment)
    drop = set(lps)
    rest = [lp for lp in recipient.sequence if lp not in drop]
    if recipient.kind is Kind.VERTEX_SET:
        return recipient.with_sequence(sorted(set(rest) | drop))
    if point is None:
        point = int(rng.integers(len(rest) + 1))
    return recipient.with_sequence(rest[:point] + list(lps) + rest[point:])


def tournament(members: list[Individual], rng: np.random.Generator) -> Individual:
    picks = rng.integers(len(members), size=TOURNAMENT_SIZE)
    return min((members[i] for i in picks), key=key_of)


def step_subpopulation(problem, members: list[Individual], generation: int, index: int,
                       config: SolverConfig) -> list[Individual]:
    rng = split_stream(config.master_seed, [_GENERATION, generation, index])
    ranked = sorted(members, key=key_of)
    nxt = ranked[:config.elite_count(len(ranked))]
    while len(nxt) < len(ranked):
        a = tournament(ranked, rng)
        b = tournament(ranked, rng)
        nxt.append(problem.breed(a, b, rng, config))
    return nxt


def hgt_exchange(problem, subpops: list[Subpopulation], rng: np.random.Generator,
                 config: SolverConfig) -> int:
    """Move stable segments between islands in place; returns the number of
    accepted transfers.

    Every ordered island pair ``(i, j)``, ``i != j``, is visited in
    lexicographic order and each donor/recipient member pair fires with
    ``hgt_probability``.  A recipient keeps the transfer only if its
    objective does not get worse.
    """
    if len(subpops) < 2:
        return 0
    accepted = 0
    for si in subpops:
        for sj in subpops:
            if si is sj:
                continue
            fire = rng.random((len(si.members), len(sj.members))) < config.hgt_probability
            for d, r in zip(*np.nonzero(fire)):
                donor = si.members[d].genome
                segments = extract_stable_segments(donor, config, si.index)
                if not segments:
                    continue
                seg = segments[int(rng.integers(len(segments)))]
                target = sj.members[r]
                child = problem.transfer(target.genome, seg.lps, rng, config)
                value = problem.evaluate(child)
                if value <= target.objective:
                    sj.members[r] = Individual(child, value)
                    accepted += 1
    return accepted


_worker_problem = None


def _init_worker(instance):
    global _worker_problem
    _worker_problem = make_problem(instance)


def _worker_step(args):
    members, generation, index, config = args
    return step_subpopulation(_worker_problem, members, generation, index, config)


def _check_population(problem, subpops: list[Subpopulation], generation: int):
    for sp in subpops:
        for ind in sp.members:
            if not problem.is_valid(ind.genome):
                raise AssertionError(
                    f"invalid genome in subpopulation {sp.index} at generation {generation}: "
                    f"{ind.genome.sequence}")


def evolve(instance, config: SolverConfig,
           progress: Callable[[int, float], None] | None = None) -> RunResult:
    """Run the full evolutionary search on ``instance`` and return the best
    solution ever observed."""
    config.validate()
    problem = make_problem(instance)
    t0 = time.perf_counter()

    subpops = []
    for s, size in enumerate(config.subpopulation_sizes()):
        rng = split_stream(config.master_seed, [_INIT, s])
        members = []
        for _ in range(size):
            g = problem.random_genome(rng, config)
            members.append(Individual(g, problem.evaluate(g)))
        subpops.append(Subpopulation(s, members))
    _check_population(problem, subpops, 0)

    best = min((ind for sp in subpops for ind in sp.members), key=key_of)
    trajectory = [best.objective]
    last_improvement = 0
    generation = 0
    hgt_generations: list[int] = []
    transfers = 0
    if progress:
        progress(0, best.objective)

    pool = None
    if config.workers > 1 and len(subpops) > 1 and problem.size >= 2:
        pool = ProcessPoolExecutor(max_workers=config.workers, initializer=_init_worker,
                                   initargs=(instance,))
    try:
        while problem.size >= 2 and generation < config.max_generations:
            generation += 1
            jobs = [(sp.members, generation, sp.index, config) for sp in subpops]
            if pool is None:
                results = [step_subpopulation(problem, *job) for job in jobs]
            else:
                results = list(pool.map(_worker_step, jobs))
            for sp, members in zip(subpops, results):
                sp.members = members

            if generation % config.hgt_period == 0 and len(subpops) > 1:
                rng = split_stream(config.master_seed, [_HGT, generation])
                transfers += hgt_exchange(problem, subpops, rng, config)
                hgt_generations.append(generation)
            _check_population(problem, subpops, generation)

            gen_best = min((ind for sp in subpops for ind in sp.members), key=key_of)
            if gen_best.objective < best.objective - IMPROVEMENT_TOL:
                last_improvement = generation
            if key_of(gen_best) < key_of(best):
                best = gen_best
            trajectory.append(best.objective)
            if progress:
                progress(generation, best.objective)
            if generation - last_improvement >= config.patience:
                log.debug("early stop at generation %d", generation)
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return RunResult(
        best_genome=best.genome,
        best_objective=best.objective,
        trajectory=trajectory,
        generations_run=generation,
        last_improvement_generation=last_improvement,
        wall_time=time.perf_counter() - t0,
        hgt_generations=hgt_generations,
        hgt_transfers=transfers,
        solution_value=problem.report(best.genome),
    )

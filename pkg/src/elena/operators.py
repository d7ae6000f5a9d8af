"""Variation operators for permutation genomes.

Mutation and crossover read the epigenetic tags to bias where they act;
local search writes back into them through :func:`apply_tag_feedback`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .genome import (
    CA,
    EPSILON,
    IMPROVEMENT_TOL,
    MR,
    SS,
    Genome,
    Kind,
    SolverConfig,
)


class MutationKind(enum.Enum):
    SWAP = "swap"
    INSERT = "insert"
    REVERSE = "reverse"


MUTATION_KINDS = (MutationKind.SWAP, MutationKind.INSERT, MutationKind.REVERSE)


@dataclass(frozen=True)
class SegmentChoice:
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


def apply_swap(seq: list[int], i: int, j: int) -> list[int]:
    out = list(seq)
    out[i], out[j] = out[j], out[i]
    return out


def apply_insert(seq: list[int], source: int, target: int) -> list[int]:
    out = list(seq)
    lp = out.pop(source)
    out.insert(target, lp)
    return out


def apply_reverse(seq: list[int], i: int, j: int) -> list[int]:
    i, j = min(i, j), max(i, j)
    out = list(seq)
    out[i:j + 1] = out[i:j + 1][::-1]
    return out


def _mutation_weights(genome: Genome) -> np.ndarray:
    w = (1.0 - genome.tags[list(genome.sequence), MR]) + EPSILON
    return w / w.sum()


def mutate_with_footprint(genome: Genome, base_rate: float, rng: np.random.Generator,
                          config: SolverConfig | None = None) -> tuple[Genome, set[int]]:
    """Like :func:`mutate`, also returning the set of LPs whose position moved."""
    n = len(genome.sequence)
    if n < 2 or rng.random() >= base_rate:
        return genome, set()
    kind = MUTATION_KINDS[int(rng.integers(len(MUTATION_KINDS)))]
    i, j = (int(x) for x in rng.choice(n, size=2, replace=False, p=_mutation_weights(genome)))
    seq = list(genome.sequence)
    if kind is MutationKind.SWAP:
        out = apply_swap(seq, i, j)
    elif kind is MutationKind.INSERT:
        out = apply_insert(seq, i, j)
    else:
        out = apply_reverse(seq, i, j)
    lo, hi = min(i, j), max(i, j)
    moved = {lp for lp in seq[lo:hi + 1]} if kind is not MutationKind.SWAP else {seq[i], seq[j]}
    return genome.with_sequence(out), moved


def mutate(genome: Genome, base_rate: float, rng: np.random.Generator,
           config: SolverConfig | None = None) -> Genome:
    """Apply one swap, insert or reverse move with probability ``base_rate``.

    Positions are drawn with weight ``1 - mutation_resistance + EPSILON`` so
    resistant LPs are rarely disturbed but never frozen outright.
    """
    return mutate_with_footprint(genome, base_rate, rng, config)[0]


def segment_length_bounds(n: int, min_segment_length: int) -> tuple[int, int]:
    lo = min(min_segment_length, n)
    hi = min(max(lo, n // 2), n)
    return lo, hi


def choose_segment(parent: Genome, rng: np.random.Generator, config: SolverConfig) -> SegmentChoice:
    n = len(parent.sequence)
    lo, hi = segment_length_bounds(n, config.min_segment_length)
    length = int(rng.integers(lo, hi + 1))
    affinity = parent.tags[list(parent.sequence), CA]
    window_sums = np.convolve(affinity, np.ones(length), mode="valid")
    weights = window_sums / length + EPSILON
    start = int(rng.choice(len(weights), p=weights / weights.sum()))
    return SegmentChoice(start, length)


def ox_fill(a: tuple[int, ...], b: tuple[int, ...], start: int, length: int) -> list[int]:
    n = len(a)
    stop = start + length
    child = [-1] * n
    child[start:stop] = a[start:stop]
    kept = set(a[start:stop])
    donors = [b[(stop + k) % n] for k in range(n)]
    donors = [lp for lp in donors if lp not in kept]
    for k, lp in enumerate(donors):
        child[(stop + k) % n] = lp
    return child


def order_crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator,
                    config: SolverConfig, segment: SegmentChoice | None = None) -> Genome:
    """Affinity-guided order crossover.

    A window of ``parent_a`` is kept in place; the rest is filled in
    ``parent_b``'s cyclic order starting after the window.  Windows with
    high mean crossover affinity are preferred.  Child tags are the
    per-LP mean of both parents.
    """
    if parent_a.kind is not Kind.PERMUTATION or parent_b.kind is not Kind.PERMUTATION:
        raise ValueError("order crossover needs permutation genomes")
    if parent_a.size != parent_b.size or len(parent_a.sequence) != len(parent_b.sequence):
        raise ValueError("parents must share the same LP universe")
    if segment is None:
        segment = choose_segment(parent_a, rng, config)
    child = ox_fill(parent_a.sequence, parent_b.sequence, segment.start, segment.length)
    tags = (parent_a.tags + parent_b.tags) / 2.0
    return Genome(tuple(child), tags, Kind.PERMUTATION)


ObjectiveFn = Callable[[tuple[int, ...]], float]


def _scan_loop(seq: list[int], current: float, objective_fn: ObjectiveFn):
    n = len(seq)
    for i in range(n - 1):
        for j in range(i + 1, n):
            cand = seq[:i] + seq[i:j + 1][::-1] + seq[j + 1:]
            value = objective_fn(tuple(cand))
            if value < current - IMPROVEMENT_TOL:
                return i, j
    return None


def _scan_vectorized(seq: list[int], current: float, objective_fn) -> tuple[int, int] | None:
    values = objective_fn.reversal_scan(np.asarray(seq, dtype=np.intp))
    better = values < current - IMPROVEMENT_TOL
    flat = int(np.argmax(better))
    if not better.flat[flat]:
        return None
    return divmod(flat, len(seq))


def first_improvement_two_opt(sequence: Iterable[int], objective_fn: ObjectiveFn
                              ) -> tuple[tuple[int, ...], float, set[int]]:
    """Run first-improvement 2-opt to a local optimum.

    Pairs ``(i, j)`` with ``i < j`` are scanned in ascending order; the first
    reversal of ``seq[i..j]`` that strictly lowers the objective is applied
    and the scan restarts.  Objective callables that expose
    ``reversal_scan(seq) -> (n, n) array`` of post-reversal values are
    scanned in one vectorized pass per step.

    Returns the improved sequence, the total objective decrease and the LPs
    inside any reversed segment.
    """
    seq = list(sequence)
    start = current = objective_fn(tuple(seq))
    touched: set[int] = set()
    scan = _scan_vectorized if hasattr(objective_fn, "reversal_scan") else _scan_loop
    while len(seq) >= 3:
        move = scan(seq, current, objective_fn)
        if move is None:
            break
        i, j = move
        touched.update(seq[i:j + 1])
        seq[i:j + 1] = seq[i:j + 1][::-1]
        current = objective_fn(tuple(seq))
    return tuple(seq), max(0.0, start - current), touched


def two_opt_improve(genome: Genome, objective_fn: ObjectiveFn,
                    config: SolverConfig | None = None) -> tuple[Genome, float]:
    seq, improvement, _ = first_improvement_two_opt(genome.sequence, objective_fn)
    return genome.with_sequence(seq), improvement


def apply_tag_feedback(genome: Genome, touched_lps: Iterable[int], improvement: float,
                       config: SolverConfig) -> Genome:
    """Raise (improvement > 0) or lower mutation resistance and stability
    of the touched LPs, clamped to [0, 1]."""
    lps = sorted(set(touched_lps))
    if not lps:
        return genome
    tags = genome.tags.copy()
    if improvement > 0:
        tags[lps, MR] = np.minimum(1.0, tags[lps, MR] + config.delta_mr)
        tags[lps, SS] = np.minimum(1.0, tags[lps, SS] + config.delta_ss)
    else:
        tags[lps, MR] = np.maximum(0.0, tags[lps, MR] - config.delta_mr)
        tags[lps, SS] = np.maximum(0.0, tags[lps, SS] - config.delta_ss)
    return genome.with_tags(tags)


def update_crossover_affinity(child: Genome, segment_lps: Iterable[int], improved_over_parents: bool,
                              config: SolverConfig) -> Genome:
    lps = sorted(set(segment_lps))
    if not lps:
        return child
    tags = child.tags.copy()
    if improved_over_parents:
        tags[lps, CA] = np.minimum(1.0, tags[lps, CA] + config.delta_ca)
    else:
        tags[lps, CA] = np.maximum(0.0, tags[lps, CA] - config.delta_ca)
    return child.with_tags(tags)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elena.genome import CA, MR, SS, SolverConfig, split_stream
from elena.operators import (
    SegmentChoice,
    apply_insert,
    apply_reverse,
    apply_swap,
    apply_tag_feedback,
    choose_segment,
    first_improvement_two_opt,
    mutate,
    order_crossover,
    two_opt_improve,
    update_crossover_affinity,
)
from elena.problems import TourLength, TspInstance, random_tsp, tour_length

from conftest import permutation_genome

CFG = SolverConfig()


def test_mutate_single_lp_unchanged():
    g = permutation_genome([0])
    assert mutate(g, 1.0, split_stream(0, [0]), CFG) is g


def test_mutate_rate_zero_unchanged():
    g = permutation_genome([3, 1, 0, 2])
    for seed in range(20):
        assert mutate(g, 1e-12, split_stream(seed, [0]), CFG).sequence == g.sequence


def test_mutate_fully_resistant_still_moves():
    # every weight sits on the epsilon floor, so sampling is uniform but alive
    g = permutation_genome(range(6), np.tile([1.0, 0.7, 0.5], (6, 1)))
    changed = sum(mutate(g, 1.0, split_stream(s, [0]), CFG).sequence != g.sequence for s in range(30))
    assert changed > 0


def test_mutate_prefers_low_resistance():
    tags = np.tile([1.0, 0.7, 0.5], (10, 1))
    tags[[0, 1], MR] = 0.0  # LPs 0 and 1 are the only mutable ones
    g = permutation_genome(range(10), tags)
    hits = 0
    for s in range(200):
        out = mutate(g, 1.0, split_stream(s, [1]), CFG).sequence
        hits += out.index(0) != 0 or out.index(1) != 1
    assert hits > 180


def test_swap_semantics():
    assert apply_swap([0, 1, 2, 3], 1, 3) == [0, 3, 2, 1]


def test_insert_semantics():
    assert apply_insert([0, 1, 2, 3, 4], 1, 3) == [0, 2, 3, 1, 4]
    assert apply_insert([0, 1, 2, 3, 4], 4, 0) == [4, 0, 1, 2, 3]


def test_reverse_semantics():
    assert apply_reverse([0, 1, 2, 3, 4], 3, 1) == [0, 3, 2, 1, 4]


@given(st.permutations(list(range(9))), st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_mutate_keeps_permutation(perm, seed, rate):
    rng = np.random.default_rng(seed)
    tags = rng.random((9, 3))
    out = mutate(permutation_genome(perm, tags), rate, rng, CFG)
    assert sorted(out.sequence) == list(range(9))
    assert np.array_equal(out.tags, tags)


def test_crossover_identical_parents():
    p = permutation_genome([2, 0, 3, 1, 4])
    for seed in range(10):
        child = order_crossover(p, p, split_stream(seed, [0]), CFG)
        assert child.sequence == p.sequence


def test_crossover_hand_trace():
    a = permutation_genome([0, 1, 2, 3, 4])
    b = permutation_genome([4, 3, 2, 1, 0])
    child = order_crossover(a, b, None, CFG, segment=SegmentChoice(1, 3))
    assert child.sequence == (4, 1, 2, 3, 0)


def test_crossover_child_tags_are_parent_mean():
    a = permutation_genome([0, 1, 2], np.zeros((3, 3)))
    b = permutation_genome([2, 1, 0], np.ones((3, 3)))
    child = order_crossover(a, b, split_stream(0, [0]), CFG)
    assert np.allclose(child.tags, 0.5)


def test_crossover_rejects_mismatched_universes():
    with pytest.raises(ValueError):
        order_crossover(permutation_genome([0, 1, 2]), permutation_genome([0, 1]),
                        split_stream(0, [0]), CFG)


@given(st.permutations(list(range(10))), st.permutations(list(range(10))), st.integers(0, 2**32 - 1))
def test_crossover_valid_and_segment_in_place(pa, pb, seed):
    rng = np.random.default_rng(seed)
    a = permutation_genome(pa, rng.random((10, 3)))
    b = permutation_genome(pb, rng.random((10, 3)))
    seg = choose_segment(a, rng, CFG)
    assert CFG.min_segment_length <= seg.length <= 5 and seg.stop <= 10
    child = order_crossover(a, b, rng, CFG, segment=seg)
    assert sorted(child.sequence) == list(range(10))
    assert child.sequence[seg.start:seg.stop] == a.sequence[seg.start:seg.stop]


def test_segment_choice_follows_affinity():
    tags = np.tile([0.5, 0.0, 0.5], (10, 1))
    tags[[6, 7], CA] = 1.0
    a = permutation_genome(range(10), tags)
    cfg = SolverConfig(min_segment_length=2)
    starts = [choose_segment(a, split_stream(s, [4]), cfg).start for s in range(300)]
    # windows covering LPs 6-7 dominate the draw
    assert sum(s in (5, 6, 7) or (s <= 6 <= s + 4) for s in starts) > 200


def test_two_opt_optimal_triangle():
    inst = TspInstance(((0, 0), (1, 0), (0, 1)))
    g, gain = two_opt_improve(permutation_genome([0, 1, 2]), TourLength(inst))
    assert g.sequence == (0, 1, 2) and gain == 0.0


def test_two_opt_uncrosses_unit_square(unit_square):
    g, gain = two_opt_improve(permutation_genome([0, 2, 1, 3]), TourLength(unit_square))
    assert g.sequence == (0, 1, 2, 3)
    assert tour_length(unit_square, g.sequence) == pytest.approx(4.0, abs=1e-12)
    assert gain == pytest.approx(2 * math.sqrt(2) - 2, abs=1e-9)


def _single_reversal_improves(inst, seq):
    base = tour_length(inst, seq)
    n = len(seq)
    for i, j in itertools.combinations(range(n), 2):
        cand = seq[:i] + seq[i:j + 1][::-1] + seq[j + 1:]
        if tour_length(inst, cand) < base - 1e-9:
            return True
    return False


@pytest.mark.parametrize("seed", range(8))
def test_two_opt_local_optimum_and_gain(seed):
    inst = random_tsp(7 + seed, seed)
    start = list(np.random.default_rng(seed).permutation(inst.size))
    seq, gain, touched = first_improvement_two_opt(start, TourLength(inst))
    before, after = tour_length(inst, start), tour_length(inst, seq)
    assert after <= before
    assert gain == pytest.approx(before - after, abs=1e-9)
    assert not _single_reversal_improves(inst, list(seq))
    assert touched <= set(range(inst.size))


@pytest.mark.parametrize("seed", range(5))
def test_two_opt_vectorized_matches_loop(seed):
    inst = random_tsp(12, 100 + seed)
    fast = TourLength(inst)
    slow = lambda s: tour_length(inst, s)  # noqa: E731 - no reversal_scan, forces the loop
    start = list(np.random.default_rng(seed).permutation(inst.size))
    assert first_improvement_two_opt(start, fast)[0] == first_improvement_two_opt(start, slow)[0]


def test_tag_feedback_improvement():
    g = permutation_genome([0, 1, 2])
    out = apply_tag_feedback(g, {1}, 0.8, CFG)
    assert out.tags[1, MR] == pytest.approx(0.55) and out.tags[1, SS] == pytest.approx(0.55)
    assert out.tags[1, CA] == 0.7
    assert np.array_equal(out.tags[[0, 2]], g.tags[[0, 2]])


def test_tag_feedback_no_improvement_clamps():
    tags = np.tile([0.02, 0.7, 0.5], (2, 1))
    out = apply_tag_feedback(permutation_genome([0, 1], tags), {0, 1}, 0.0, CFG)
    assert out.tags[0, MR] == 0.0 and out.tags[0, SS] == pytest.approx(0.45)


def test_tag_feedback_empty_touched():
    g = permutation_genome([0, 1, 2])
    assert np.array_equal(apply_tag_feedback(g, set(), 1.0, CFG).tags, g.tags)


@pytest.mark.parametrize("ca, improved, expected", [
    (0.7, True, 0.75), (0.7, False, 0.65), (0.97, True, 1.0)])
def test_update_crossover_affinity(ca, improved, expected):
    g = permutation_genome([0, 1], np.tile([0.5, ca, 0.5], (2, 1)))
    out = update_crossover_affinity(g, {0}, improved, CFG)
    assert out.tags[0, CA] == pytest.approx(expected)
    assert out.tags[1, CA] == ca


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=18, max_size=18), st.sets(st.integers(0, 5)),
       st.floats(-1, 1), st.floats(0.001, 0.999))
def test_tag_feedback_direction(values, touched, improvement, step):
    tags = np.array(values).reshape(6, 3)
    cfg = SolverConfig(delta_mr=step, delta_ss=step)
    out = apply_tag_feedback(permutation_genome(range(6), tags), touched, improvement, cfg).tags
    for lp in touched:
        for col in (MR, SS):
            expected = min(1.0, tags[lp, col] + step) if improvement > 0 else max(0.0, tags[lp, col] - step)
            assert out[lp, col] == expected
    assert np.all((out >= 0) & (out <= 1))

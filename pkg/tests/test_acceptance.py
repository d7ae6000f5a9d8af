"""End-to-end acceptance checks.  Each test prints one PASS/FAIL line."""

import dataclasses
import time

import numpy as np
import pytest

from elena.baselines import full_two_opt, greedy_clique, nearest_neighbor_routes, nearest_neighbor_tour
from elena.cli import main
from elena.engine import evolve
from elena.genome import CA, MR, SS, Genome, Kind, SolverConfig, preset
from elena.instance_io import load_instance
from elena.operators import (
    apply_tag_feedback,
    choose_segment,
    first_improvement_two_opt,
    mutate,
    order_crossover,
    update_crossover_affinity,
)
from elena.problems import (
    RouteCost,
    TourLength,
    clique_improve,
    decode_routes,
    is_clique,
    random_mcp,
    random_tsp,
    tour_length,
    vrp_cost,
)
from elena.stats import anova_oneway

from conftest import DATA, brute_force_max_clique, brute_force_tour, permutation_genome


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_tsp_oracle(report):
    hits, slowest = 0, 0.0
    for k in range(20):
        inst = random_tsp(5 + k % 4, 1000 + k)
        t0 = time.perf_counter()
        result = evolve(inst, preset("elena-15-0.2", master_seed=k, max_generations=500))
        slowest = max(slowest, time.perf_counter() - t0)
        hits += abs(result.best_objective - brute_force_tour(inst)) <= 1e-9
    report(1, hits >= 19 and slowest < 30,
           f"optimal on {hits}/20 instances (need >= 19), slowest run {slowest:.2f}s (< 30s)")


def test_criterion_02_tsp_ordering(report):
    t0 = time.perf_counter()
    elena, baseline = [], []
    for seed in range(5):
        inst = random_tsp(50, 2000 + seed)
        elena.append(evolve(inst, preset("elena-15-0.2", master_seed=seed)).best_objective)
        baseline.append(tour_length(inst, full_two_opt(inst, nearest_neighbor_tour(inst))))
    elapsed = time.perf_counter() - t0
    report(2, np.mean(elena) <= np.mean(baseline) and elapsed < 300,
           f"mean ELENA {np.mean(elena):.4f} vs NN+2-opt {np.mean(baseline):.4f}, {elapsed:.1f}s (< 300s)")


@pytest.mark.slow
def test_criterion_03_vrp_augerat(report):
    inst = load_instance(DATA / "A-n32-k5.vrp", "vrp")
    t0 = time.perf_counter()
    result = evolve(inst, preset("elena-300-0.5", master_seed=1))
    elapsed = time.perf_counter() - t0
    routes = decode_routes(inst, result.best_genome.sequence)
    cost = vrp_cost(inst, routes)
    feasible = all(load <= inst.capacity for load in routes.loads) and len(routes.routes) <= inst.vehicle_count
    nn_cost = RouteCost(inst)(nearest_neighbor_routes(inst))
    gap = cost / inst.best_known - 1
    report(3, feasible and gap <= 0.15 and cost <= nn_cost and elapsed < 600,
           f"feasible={feasible}, cost {cost:g} vs best known {inst.best_known:g} (gap {gap:.1%}, need <= 15%), "
           f"NN baseline {nn_cost:g}, {elapsed:.0f}s (< 600s)")


def test_criterion_04_mcp(report):
    exact = 0
    for k in range(10):
        inst = random_mcp(20, 3000 + k, 0.5)
        result = evolve(inst, preset("elena-15-0.2", master_seed=k))
        assert is_clique(inst, result.best_genome.sequence)
        exact += len(result.best_genome.sequence) == brute_force_max_clique(inst)
    wins = 0
    for k in range(5):
        inst = random_mcp(100, 4000 + k, 0.5)
        result = evolve(inst, preset("elena-50-0.5", master_seed=k))
        assert is_clique(inst, result.best_genome.sequence)
        wins += len(result.best_genome.sequence) >= len(greedy_clique(inst))
    report(4, exact >= 8 and wins >= 4,
           f"brute-force optimum on {exact}/10 G(20,0.5) (need >= 8); >= greedy on {wins}/5 G(100,0.5) (need >= 4)")


def test_criterion_05_tag_invariants(report):
    cfg = SolverConfig()
    violations = 0
    applications = 0
    rng = np.random.default_rng(5)
    tsp = {n: TourLength(random_tsp(n, n)) for n in range(5, 13)}
    graphs = [random_mcp(15, s, 0.5) for s in range(5)]

    def ok_perm(g, n):
        return sorted(g.sequence) == list(range(n)) and bool(np.all((g.tags >= 0) & (g.tags <= 1)))

    for _ in range(2500):
        n = int(rng.integers(5, 13))
        a = permutation_genome(rng.permutation(n), rng.random((n, 3)))
        b = permutation_genome(rng.permutation(n), rng.random((n, 3)))
        violations += not ok_perm(mutate(a, float(rng.random()), rng, cfg), n)
        seg = choose_segment(a, rng, cfg)
        child = order_crossover(a, b, rng, cfg, segment=seg)
        child = update_crossover_affinity(child, a.sequence[seg.start:seg.stop], bool(rng.random() < 0.5), cfg)
        violations += not ok_perm(child, n)
        seq, gain, touched = first_improvement_two_opt(list(a.sequence), tsp[n])
        fed = apply_tag_feedback(a.with_sequence(seq), touched, gain, cfg)
        violations += not ok_perm(fed, n)
        graph = graphs[int(rng.integers(len(graphs)))]
        members = sorted(set(int(v) for v in rng.choice(15, int(rng.integers(0, 8)), replace=False)))
        out = clique_improve(graph, Genome(tuple(members), rng.random((15, 3)), Kind.VERTEX_SET), cfg)
        violations += not (is_clique(graph, out.sequence) and np.all((out.tags >= 0) & (out.tags <= 1)))
        applications += 4
    report(5, violations == 0, f"{violations} violations in {applications} operator applications")


def test_criterion_06_feedback_conformance(report):
    rng = np.random.default_rng(6)
    failures = 0
    cases = 0
    for k in range(2000):
        step = float(rng.choice([0.05, 0.1, 0.3, 0.7]))
        cfg = SolverConfig(delta_mr=step, delta_ss=step)
        tags = rng.random((8, 3))
        tags[rng.random((8, 3)) < 0.2] = 1.0
        tags[rng.random((8, 3)) < 0.2] = 0.0
        g = permutation_genome(rng.permutation(8), tags)
        touched = set(int(v) for v in rng.choice(8, int(rng.integers(0, 9)), replace=False))
        improvement = float(rng.choice([-1.0, 0.0, 1e-12, 0.5])) if k % 2 else \
            first_improvement_two_opt(list(g.sequence), TourLength(random_tsp(8, k)))[1]
        out = apply_tag_feedback(g, touched, improvement, cfg).tags
        for lp in range(8):
            for col in (MR, SS):
                before, after = tags[lp, col], out[lp, col]
                if lp not in touched:
                    expected = before
                elif improvement > 0:
                    expected = min(1.0, before + step)
                else:
                    expected = max(0.0, before - step)
                failures += after != expected
                cases += 1
            failures += out[lp, CA] != tags[lp, CA]
    report(6, failures == 0, f"{failures} mismatches against exact min/max clamping over {cases} tag checks")


def test_criterion_07_hgt_schedule(report):
    inst = random_tsp(25, 7)
    cfg = preset("elena-15-0.2", master_seed=3, patience=10_000, max_generations=60)
    result = evolve(inst, cfg)
    expected = list(range(5, result.generations_run + 1, 5))
    schedule_ok = result.hgt_generations == expected and result.hgt_transfers >= 0

    silent = evolve(inst, dataclasses.replace(cfg, hgt_probability=0.0))
    no_hgt = evolve(inst, dataclasses.replace(cfg, hgt_period=cfg.max_generations + 1))
    identical = (silent.best_genome == no_hgt.best_genome and silent.trajectory == no_hgt.trajectory
                 and silent.generations_run == no_hgt.generations_run and silent.hgt_transfers == 0
                 and no_hgt.hgt_generations == [])
    report(7, schedule_ok and identical,
           f"HGT at {result.hgt_generations[:3]}...{result.hgt_generations[-1:]} "
           f"(expected multiples of 5 up to {result.generations_run}); p=0 identical to no-HGT: {identical}")


def test_criterion_08_anova_golden(report):
    f, p = anova_oneway([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    report(8, abs(f - 3.0) <= 1e-9 and abs(p - 0.125) <= 1e-9, f"F = {f!r}, p = {p!r}")


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_09_determinism(report, tmp_path, capsys):
    base = ["bench", "--problem", "tsp", "--generate", "n=20,seed=9", "--generate", "n=12,seed=4",
            "--pop", "15", "--mut", "0.2", "0.5", "--algo", "elena", "nn2opt", "--trials", "2",
            "--max-generations", "25", "--no-timing"]
    vrp = ["bench", "--problem", "vrp", "--generate", "n=12,seed=2,capacity=40,vehicles=4",
           "--pop", "16", "--trials", "2", "--max-generations", "15", "--no-timing"]
    trees = {}
    for label, workers in (("w1", 1), ("w1-again", 1), ("w4", 4)):
        for name, args in (("tsp", base), ("vrp", vrp)):
            out = tmp_path / label / name
            assert main(args + ["--workers", str(workers), "--out", str(out)]) == 0
        trees[label] = _tree(tmp_path / label)
    capsys.readouterr()
    same = trees["w1"] == trees["w1-again"] == trees["w4"]
    report(9, same and len(trees["w1"]) > 10,
           f"{len(trees['w1'])} result files byte-identical across reruns and worker counts 1/4: {same}")


def test_criterion_10_early_stopping(report):
    cfg = SolverConfig(master_seed=0)
    result = evolve(random_tsp(3, 10), cfg)
    gap = result.generations_run - result.last_improvement_generation
    report(10, gap <= cfg.patience + 1 and result.generations_run < cfg.max_generations,
           f"stopped at generation {result.generations_run}, last improvement {result.last_improvement_generation}, "
           f"patience {cfg.patience}")

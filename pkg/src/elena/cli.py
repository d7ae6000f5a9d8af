"""Command-line entry point: ``elena solve``, ``elena bench``, ``elena generate``.

Exit codes: 0 success, 1 invalid arguments or inputs, 2 at least one run failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stats
from .baselines import (
    SaSchedule,
    full_two_opt,
    greedy_clique,
    nearest_neighbor_routes,
    nearest_neighbor_tour,
    objective_for,
    simulated_annealing,
)
from .engine import evolve
from .genome import ConfigError, EpigeneticTags, InvalidInstanceError, SolverConfig, preset
from .instance_io import (
    ParseError,
    ResultRecord,
    atomic_write_text,
    format_instance,
    load_instance,
    write_results,
)
from .problems import Metric, TspInstance, VrpInstance, random_instance

log = logging.getLogger("elena")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
ALGORITHMS = ("elena", "nn", "nn2opt", "sa", "greedy-clique")
SUPPORTED = {
    "tsp": {"elena", "nn", "nn2opt", "sa"},
    "vrp": {"elena", "nn", "nn2opt", "sa"},
    "mcp": {"elena", "greedy-clique"},
}
DEFAULT_OUT = "results"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# --- instance specs --------------------------------------------------------

def parse_spec(text: str) -> dict:
    """``"n=10,seed=42,p=0.5"`` -> ``{"n": 10, "seed": 42, "p": 0.5}``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"bad spec item {part!r}; expected key=value")
        key = key.strip()
        if key == "demand":
            lo, _, hi = value.partition("-")
            out[key] = (int(lo), int(hi or lo))
            continue
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def generate_instance(problem: str, spec: dict, metric: Metric | None = None):
    params = dict(spec)
    try:
        n = int(params.pop("n"))
        seed = int(params.pop("seed", 0))
    except KeyError:
        raise UsageError("generator spec needs n=<size>") from None
    allowed = {"tsp": set(), "vrp": {"capacity", "vehicles", "demand"}, "mcp": {"p"}}[problem]
    unknown = set(params) - allowed
    if unknown:
        raise UsageError(f"unknown generator parameters for {problem}: {sorted(unknown)}")
    if metric is not None and problem != "mcp":
        params["metric"] = metric
    return random_instance(problem, seed, n, **params)


def resolve_instance(problem: str, path: str | None, spec: str | None, metric: Metric | None):
    if (path is None) == (spec is None):
        raise UsageError("give exactly one of --instance or --generate")
    if path is not None:
        if not Path(path).is_file():
            raise UsageError(f"instance file not found: {path}")
        return load_instance(path, problem, metric)
    return generate_instance(problem, parse_spec(spec), metric)


def instance_id(instance) -> str:
    return instance.name or "instance"


def instance_size(instance) -> int:
    return instance.size


# --- configuration ---------------------------------------------------------

_OVERRIDES = {
    # flag dest -> SolverConfig field
    "pop": "population_size",
    "mut": "initial_mutation_rate",
    "subpops": "subpopulation_count",
    "delta_mr": "delta_mr",
    "delta_ss": "delta_ss",
    "delta_ca": "delta_ca",
    "hgt_period": "hgt_period",
    "hgt_probability": "hgt_probability",
    "stability_threshold": "stability_threshold",
    "min_segment_length": "min_segment_length",
    "elitism_fraction": "elitism_fraction",
    "patience": "patience",
    "max_generations": "max_generations",
}


def solver_config(args, seed: int, pop=None, mut=None) -> SolverConfig:
    overrides = {}
    for dest, name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[name] = value
    if pop is not None:
        overrides["population_size"] = pop
    if mut is not None:
        overrides["initial_mutation_rate"] = mut
    tags = {k: getattr(args, f"tag_{k}", None)
            for k in ("mutation_resistance", "crossover_affinity", "stability_score")}
    if any(v is not None for v in tags.values()):
        base = EpigeneticTags()
        overrides["initial_tags"] = EpigeneticTags(**{
            k: (v if v is not None else getattr(base, k)) for k, v in tags.items()})
    overrides["master_seed"] = seed
    overrides["workers"] = getattr(args, "workers", 1) or 1
    if getattr(args, "config", None):
        return dataclasses.replace(preset(args.config), **overrides).validate()
    return SolverConfig(**overrides).validate()


def sa_schedule(args) -> SaSchedule:
    return SaSchedule(
        initial_temperature=args.sa_t0,
        cooling_rate=args.sa_cooling,
        iterations_per_temperature=args.sa_iterations,
        minimum_temperature=args.sa_tmin,
    )


def run_params(algo: str, args, config: SolverConfig | None) -> dict:
    if algo == "elena":
        params = config.to_dict()
    elif algo == "sa":
        sched = sa_schedule(args)
        params = dict(sched.__dict__, seed=config.master_seed if config else 0)
    else:
        params = {}
    return {"algorithm": algo, "params": params}


def config_digest(run_config: dict) -> str:
    payload = json.dumps(run_config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


# --- running one cell ------------------------------------------------------

@dataclass
class Outcome:
    best: float
    generations: int
    wall_time: float
    trajectory: list[float] = field(default_factory=list)


def run_algorithm(algo: str, instance, args, config: SolverConfig) -> Outcome:
    if isinstance(instance, TspInstance):
        problem = "tsp"
    elif isinstance(instance, VrpInstance):
        problem = "vrp"
    else:
        problem = "mcp"
    if algo not in SUPPORTED[problem]:
        raise UsageError(f"algorithm {algo!r} does not apply to {problem}")

    t0 = time.perf_counter()
    if algo == "elena":
        result = evolve(instance, config)
        return Outcome(result.best_objective, result.generations_run, result.wall_time,
                       list(result.trajectory))
    if algo == "greedy-clique":
        best = -float(len(greedy_clique(instance)))
    else:
        objective = objective_for(instance)
        if algo in ("nn", "nn2opt"):
            if problem == "tsp":
                perm = nearest_neighbor_tour(instance, 0) if instance.size else []
            else:
                perm = nearest_neighbor_routes(instance)
            if algo == "nn2opt":
                perm = full_two_opt(instance, perm)
        else:
            rng = np.random.default_rng(config.master_seed)
            perm, _ = simulated_annealing(instance, sa_schedule(args), rng)
        best = float(objective(perm))
    return Outcome(best, 0, time.perf_counter() - t0, [best])


def _echo_config(out: Path, run_config: dict, digest: str):
    path = out / "configs" / f"{digest}.json"
    atomic_write_text(path, json.dumps(run_config, sort_keys=True, indent=2, default=str) + "\n")


# --- commands --------------------------------------------------------------

def cmd_solve(args) -> int:
    metric = Metric(args.metric) if args.metric else None
    instance = resolve_instance(args.problem, args.instance, args.generate, metric)
    if args.algo not in SUPPORTED[args.problem]:
        raise UsageError(f"algorithm {args.algo!r} does not apply to {args.problem}")
    config = solver_config(args, args.seed)
    run_config = run_params(args.algo, args, config)
    digest = config_digest(run_config)

    outcome = run_algorithm(args.algo, instance, args, config)

    out = Path(args.out)
    record = ResultRecord(instance_id(instance), args.algo, args.seed, digest,
                          outcome.best, outcome.generations, outcome.wall_time)
    write_results([record], {record.key: outcome.trajectory}, out, record_time=not args.no_timing)
    _echo_config(out, run_config, digest)
    print(repr(float(outcome.best)))
    return EXIT_OK


@dataclass
class BenchPlan:
    problem: str
    instances: list = field(default_factory=list)
    algorithms: list[str] = field(default_factory=lambda: ["elena"])
    populations: list[int | None] = field(default_factory=lambda: [None])
    mutation_rates: list[float | None] = field(default_factory=lambda: [None])
    trials: int = 1
    seed: int = 0
    out: str = DEFAULT_OUT

    def validate(self):
        if self.problem not in SUPPORTED:
            raise UsageError(f"unknown problem {self.problem!r}")
        if not self.instances:
            raise UsageError("benchmark plan lists no instances")
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        bad = [a for a in self.algorithms if a not in SUPPORTED[self.problem]]
        if bad:
            raise UsageError(f"algorithms {bad} do not apply to {self.problem}")


def _cells(plan: BenchPlan):
    for algo in plan.algorithms:
        if algo == "elena":
            for pop, mut in itertools.product(plan.populations, plan.mutation_rates):
                yield algo, pop, mut
        else:
            yield algo, None, None


def _cell_label(algo: str, config: SolverConfig) -> str:
    if algo != "elena":
        return algo
    return f"elena-{config.population_size}-{config.initial_mutation_rate:g}"


def _plan_from_args(args) -> BenchPlan:
    metric = Metric(args.metric) if args.metric else None
    if args.plan:
        raw = json.loads(Path(args.plan).read_text(encoding="utf-8"))
        problem = raw.get("problem", args.problem)
        instances = [resolve_instance(problem, i.get("path"), i.get("generate"), metric)
                     for i in raw.get("instances", [])]
        plan = BenchPlan(problem, instances, raw.get("algorithms", ["elena"]),
                         raw.get("populations", [None]), raw.get("mutation_rates", [None]),
                         int(raw.get("trials", 1)), int(raw.get("seed", 0)),
                         raw.get("out", args.out))
    else:
        if args.problem is None:
            raise UsageError("--problem is required without --plan")
        instances = [resolve_instance(args.problem, p, None, metric) for p in args.instance or []]
        instances += [resolve_instance(args.problem, None, g, metric) for g in args.generate or []]
        for size in args.sizes or []:
            spec = f"n={size}," + (args.gen_params or "")
            instances.append(resolve_instance(args.problem, None, spec, metric))
        plan = BenchPlan(args.problem, instances, args.algo or ["elena"],
                         args.pop_grid or [None], args.mut_grid or [None],
                         args.trials, args.seed, args.out)
    plan.validate()
    return plan


def cmd_bench(args) -> int:
    plan = _plan_from_args(args)
    out = Path(plan.out)
    records: list[ResultRecord] = []
    trajectories = {}
    failures = 0
    cells: dict[tuple[str, str], list[float]] = {}
    cell_meta: dict[tuple[str, str], tuple] = {}

    for instance in plan.instances:
        inst_id = instance_id(instance)
        for algo, pop, mut in _cells(plan):
            for trial in range(plan.trials):
                seed = plan.seed + trial
                try:
                    config = solver_config(args, seed, pop, mut)
                    run_config = run_params(algo, args, config)
                    digest = config_digest(run_config)
                    outcome = run_algorithm(algo, instance, args, config)
                except (UsageError, ConfigError) as exc:
                    raise UsageError(str(exc)) from exc
                except Exception:
                    failures += 1
                    log.exception("cell %s / %s / seed %d failed", inst_id, algo, seed)
                    continue
                label = _cell_label(algo, config)
                record = ResultRecord(inst_id, label, seed, digest, outcome.best,
                                      outcome.generations, outcome.wall_time)
                records.append(record)
                trajectories[record.key] = outcome.trajectory
                _echo_config(out, run_config, digest)
                cells.setdefault((inst_id, label), []).append(outcome.best)
                cell_meta[(inst_id, label)] = (instance_size(instance), algo,
                                               config.population_size, config.initial_mutation_rate)
                log.info("%s %s seed=%d best=%r", inst_id, label, seed, outcome.best)

    write_results(records, trajectories, out, record_time=not args.no_timing)
    atomic_write_text(out / "cells.csv", _cells_csv(cells, cell_meta))
    if "elena" in plan.algorithms:
        atomic_write_text(out / "grid.csv", _grid_csv(plan, cells, cell_meta))
    anova = _anova_rows(plan, cells, cell_meta)
    if anova:
        atomic_write_text(out / "anova.csv", stats.significance_table_csv(anova))
        atomic_write_text(out / "anova.txt", stats.significance_table_text(anova))
    print(f"{len(records)} runs written to {out}" + (f", {failures} failed" if failures else ""))
    return EXIT_FAILED if failures else EXIT_OK


def _cells_csv(cells, meta) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("instance", "size", "algorithm", "trials", "mean", "std", "cv"))
    for key in sorted(cells):
        values = cells[key]
        if len(values) >= 2:
            mean, std, cv = _safe_summary(values)
        else:
            mean, std, cv = values[0], float("nan"), float("nan")
        writer.writerow((key[0], meta[key][0], key[1], len(values), repr(mean), repr(std), repr(cv)))
    return buf.getvalue()


def _safe_summary(values):
    try:
        return stats.summarize(values)
    except stats.UndefinedStatistic:
        mean = sum(values) / len(values)
        return mean, 0.0, float("nan")


def _grid_csv(plan: BenchPlan, cells, meta) -> str:
    """Rows are instance sizes, columns the (population, mutation) pairs:
    mean best objective of the ELENA cells."""
    columns = sorted({(m[2], m[3]) for k, m in meta.items() if m[1] == "elena"})
    rows = sorted({(m[0], k[0]) for k, m in meta.items() if m[1] == "elena"})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["size", "instance"] + [f"pop={p} mut={m:g}" for p, m in columns])
    for size, inst_id in rows:
        line = [size, inst_id]
        for pop, mut in columns:
            label = f"elena-{pop}-{mut:g}"
            values = cells.get((inst_id, label))
            line.append(repr(sum(values) / len(values)) if values else "")
        writer.writerow(line)
    return buf.getvalue()


def _anova_rows(plan: BenchPlan, cells, meta) -> list[stats.AnovaRow]:
    rows = []
    by_instance: dict[str, list] = {}
    for (inst_id, label), values in sorted(cells.items()):
        by_instance.setdefault(inst_id, []).append(stats.TrialGroup(label, values))
    for inst_id, groups in by_instance.items():
        if len(groups) < 2 or any(len(g.observations) < 2 for g in groups):
            continue
        size = next(m[0] for k, m in meta.items() if k[0] == inst_id)
        rows.append(stats.anova_row(f"{size} ({inst_id})", groups))
    return rows


def cmd_generate(args) -> int:
    metric = Metric(args.metric) if args.metric else None
    instance = generate_instance(args.problem, parse_spec(args.spec), metric)
    if isinstance(instance, VrpInstance) and not instance.demand_fits:
        log.warning("total demand %d exceeds fleet capacity %d", instance.total_demand,
                    instance.vehicle_count * instance.capacity)
    text = format_instance(instance)
    out = Path(args.out)
    if out.is_dir() or args.out.endswith(os.sep):
        ext = {"tsp": ".tsp", "vrp": ".vrp", "mcp": ".clq"}[args.problem]
        out = out / f"{instance.name}{ext}"
    atomic_write_text(out, text)
    print(out)
    return EXIT_OK


# --- argument parsing ------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver configuration")
    g.add_argument("--config", help="preset name, e.g. elena-15-0.2")
    g.add_argument("--subpops", type=int)
    g.add_argument("--delta-mr", type=float)
    g.add_argument("--delta-ss", type=float)
    g.add_argument("--delta-ca", type=float)
    g.add_argument("--hgt-period", type=int)
    g.add_argument("--hgt-probability", type=float)
    g.add_argument("--stability-threshold", type=float)
    g.add_argument("--min-segment-length", type=int)
    g.add_argument("--elitism-fraction", type=float)
    g.add_argument("--patience", type=int)
    g.add_argument("--max-generations", type=int)
    g.add_argument("--tag-mutation-resistance", type=float, dest="tag_mutation_resistance")
    g.add_argument("--tag-crossover-affinity", type=float, dest="tag_crossover_affinity")
    g.add_argument("--tag-stability-score", type=float, dest="tag_stability_score")
    g.add_argument("--workers", type=int, default=1,
                   help="processes evolving subpopulations; results do not depend on it")
    s = p.add_argument_group("simulated annealing")
    s.add_argument("--sa-t0", type=float, default=1.0)
    s.add_argument("--sa-cooling", type=float, default=0.995)
    s.add_argument("--sa-iterations", type=int, default=100)
    s.add_argument("--sa-tmin", type=float, default=1e-4)
    p.add_argument("--metric", choices=[m.value for m in Metric],
                   help="distance convention; default follows the file (EUC_2D is rounded)")
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 for wall time so reruns are byte-identical")
    p.add_argument("--out", default=os.environ.get("ELENA_OUT", DEFAULT_OUT))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elena", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", help="run one algorithm on one instance")
    solve.add_argument("--problem", required=True, choices=sorted(SUPPORTED))
    solve.add_argument("--instance")
    solve.add_argument("--generate", metavar="SPEC", help="e.g. n=50,seed=1")
    solve.add_argument("--algo", default="elena", choices=ALGORITHMS)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--pop", type=int)
    solve.add_argument("--mut", type=float)
    _add_config_flags(solve)
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="run an experiment grid")
    bench.add_argument("--plan", help="JSON benchmark plan")
    bench.add_argument("--problem", choices=sorted(SUPPORTED))
    bench.add_argument("--instance", action="append")
    bench.add_argument("--generate", action="append", metavar="SPEC")
    bench.add_argument("--sizes", type=int, nargs="+", help="generate one instance per size")
    bench.add_argument("--gen-params", help="extra generator params for --sizes, e.g. seed=1,p=0.5")
    bench.add_argument("--algo", nargs="+", choices=ALGORITHMS)
    bench.add_argument("--pop", type=int, nargs="+", dest="pop_grid")
    bench.add_argument("--mut", type=float, nargs="+", dest="mut_grid")
    bench.add_argument("--trials", type=int, default=1)
    bench.add_argument("--seed", type=int, default=0)
    _add_config_flags(bench)
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("generate", help="write a random instance file")
    gen.add_argument("--problem", required=True, choices=sorted(SUPPORTED))
    gen.add_argument("--spec", required=True, help="e.g. n=10,seed=42 or n=20,seed=1,p=0.3")
    gen.add_argument("--metric", choices=[m.value for m in Metric])
    gen.add_argument("--out", required=True, help="file path or existing directory")
    gen.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError, InvalidInstanceError, ValueError) as exc:
        print(f"elena: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"elena: error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

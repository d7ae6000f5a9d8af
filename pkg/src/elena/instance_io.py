"""Readers and writers for TSPLIB-style TSP/CVRP files, DIMACS clique
graphs and run-result CSVs."""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .problems import McpInstance, Metric, TspInstance, VrpInstance


class ParseError(ValueError):
    pass


_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION")
_KEYWORD = re.compile(r"^([A-Z][A-Z0-9_]*)\s*(?::(.*))?$")


@dataclass
class VrpFileModel:
    name: str = ""
    comment: str = ""
    dimension: int = 0
    capacity: int = 0
    edge_weight_type: str = ""
    vehicles: int | None = None
    node_ids: list[int] = field(default_factory=list)
    coordinates: list[tuple[float, float]] = field(default_factory=list)
    demands: dict[int, int] = field(default_factory=dict)
    depots: list[int] = field(default_factory=list)


def _split_sections(text: str) -> tuple[dict[str, str], dict[str, list[list[str]]]]:
    header: dict[str, str] = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        m = _KEYWORD.match(line)
        if m and m.group(1).endswith("_SECTION"):
            current = m.group(1)
            sections[current] = []
            continue
        if m and m.group(2) is not None:
            header[m.group(1)] = m.group(2).strip()
            current = None
            continue
        if current is None:
            raise ParseError(f"unexpected line outside any section: {line!r}")
        sections[current].append(line.split())
    return header, sections


def _int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{what} is not an integer: {value!r}") from None


def _coords(rows: list[list[str]], section: str) -> tuple[list[int], list[tuple[float, float]]]:
    ids, coords = [], []
    for row in rows:
        if len(row) < 3:
            raise ParseError(f"{section}: malformed line {' '.join(row)!r}")
        ids.append(_int(row[0], "node id"))
        try:
            coords.append((float(row[1]), float(row[2])))
        except ValueError:
            raise ParseError(f"{section}: bad coordinate in {' '.join(row)!r}") from None
    return ids, coords


def _metric_for(edge_weight_type: str) -> Metric:
    return Metric.ROUNDED if edge_weight_type.upper() == "EUC_2D" else Metric.REAL


def _vehicles_from(name: str, comment: str) -> int | None:
    m = re.search(r"-k0*(\d+)", name)
    if m:
        return int(m.group(1))
    m = re.search(r"(?:trucks|vehicles)\s*[:=]?\s*(\d+)", comment, re.IGNORECASE)
    return int(m.group(1)) if m else None


def best_known_from(comment: str) -> float | None:
    m = re.search(r"(?:optimal|best)(?:\s+known)?\s+value\s*[:=]?\s*([0-9.]+)", comment, re.IGNORECASE)
    return float(m.group(1)) if m else None


def read_vrp_model(text: str) -> VrpFileModel:
    header, sections = _split_sections(text)
    for key in ("DIMENSION", "CAPACITY"):
        if key not in header:
            raise ParseError(f"missing mandatory field {key}")
    for section in _SECTIONS:
        if section not in sections:
            raise ParseError(f"missing mandatory section {section}")
    model = VrpFileModel(
        name=header.get("NAME", ""),
        comment=header.get("COMMENT", ""),
        dimension=_int(header["DIMENSION"], "DIMENSION"),
        capacity=_int(header["CAPACITY"], "CAPACITY"),
        edge_weight_type=header.get("EDGE_WEIGHT_TYPE", ""),
    )
    if "VEHICLES" in header:
        model.vehicles = _int(header["VEHICLES"], "VEHICLES")
    else:
        model.vehicles = _vehicles_from(model.name, model.comment)
    model.node_ids, model.coordinates = _coords(sections["NODE_COORD_SECTION"], "NODE_COORD_SECTION")
    for row in sections["DEMAND_SECTION"]:
        if len(row) < 2:
            raise ParseError(f"DEMAND_SECTION: malformed line {' '.join(row)!r}")
        model.demands[_int(row[0], "node id")] = _int(row[1], "demand")
    for row in sections["DEPOT_SECTION"]:
        for tok in row:
            value = _int(tok, "depot id")
            if value == -1:
                break
            model.depots.append(value)
    if len(model.coordinates) != model.dimension:
        raise ParseError(f"DIMENSION {model.dimension} but {len(model.coordinates)} coordinates")
    if len(model.demands) != model.dimension or set(model.demands) != set(model.node_ids):
        raise ParseError(f"DIMENSION {model.dimension} but {len(model.demands)} demands")
    if len(model.depots) != 1:
        raise ParseError(f"expected exactly one depot, found {len(model.depots)}")
    if model.depots[0] not in model.node_ids:
        raise ParseError(f"depot {model.depots[0]} is not a node")
    if model.vehicles is None:
        raise ParseError("vehicle count not found in NAME, COMMENT or VEHICLES")
    return model


def parse_vrp(text: str, metric: Metric | None = None) -> VrpInstance:
    """Parse an Augerat/CVRPLIB instance.  EUC_2D files default to the
    rounded TSPLIB metric; pass ``metric`` to override."""
    model = read_vrp_model(text)
    index = {node: k for k, node in enumerate(model.node_ids)}
    return VrpInstance(
        coordinates=tuple(model.coordinates),
        demands=tuple(model.demands[node] for node in model.node_ids),
        capacity=model.capacity,
        vehicle_count=model.vehicles,
        depot=index[model.depots[0]],
        metric=metric or _metric_for(model.edge_weight_type),
        name=model.name,
        best_known=best_known_from(model.comment),
    )


def parse_tsp(text: str, metric: Metric | None = None) -> TspInstance:
    header, sections = _split_sections(text)
    if "NODE_COORD_SECTION" not in sections:
        raise ParseError("missing mandatory section NODE_COORD_SECTION")
    _, coords = _coords(sections["NODE_COORD_SECTION"], "NODE_COORD_SECTION")
    if "DIMENSION" in header and _int(header["DIMENSION"], "DIMENSION") != len(coords):
        raise ParseError(f"DIMENSION {header['DIMENSION']} but {len(coords)} coordinates")
    return TspInstance(tuple(coords), metric or _metric_for(header.get("EDGE_WEIGHT_TYPE", "")),
                       name=header.get("NAME", ""))


def parse_dimacs_clq(text: str, name: str = "") -> McpInstance:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        if parts[0] == "p":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: malformed problem line")
            n = _int(parts[2], "vertex count")
        elif parts[0] == "e":
            if n is None:
                raise ParseError(f"line {lineno}: edge before problem line")
            if len(parts) < 3:
                raise ParseError(f"line {lineno}: malformed edge line")
            u, v = _int(parts[1], "vertex"), _int(parts[2], "vertex")
            if not (1 <= u <= n and 1 <= v <= n):
                raise ParseError(f"line {lineno}: edge ({u}, {v}) outside 1..{n}")
            if u == v:
                raise ParseError(f"line {lineno}: self-loop on vertex {u}")
            edges.append((u - 1, v - 1))
        else:
            raise ParseError(f"line {lineno}: unknown record type {parts[0]!r}")
    if n is None:
        raise ParseError("missing problem line 'p edge N M'")
    return McpInstance(n, edges, name=name)


def _edge_weight_type(metric: Metric) -> str:
    return "EUC_2D" if metric is Metric.ROUNDED else "EXACT_2D"


def write_tsp(instance: TspInstance) -> str:
    lines = [
        f"NAME : {instance.name or 'tsp'}",
        "TYPE : TSP",
        f"DIMENSION : {instance.size}",
        f"EDGE_WEIGHT_TYPE : {_edge_weight_type(instance.metric)}",
        "NODE_COORD_SECTION",
    ]
    lines += [f"{k + 1} {x!r} {y!r}" for k, (x, y) in enumerate(instance.coordinates)]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def write_vrp(instance: VrpInstance) -> str:
    comment = f"generated, No of trucks: {instance.vehicle_count}"
    if instance.best_known is not None:
        comment += f", Best value: {instance.best_known!r}"
    if not instance.demand_fits:
        comment += ", WARNING: total demand exceeds fleet capacity"
    lines = [
        f"NAME : {instance.name or 'vrp'}",
        f"COMMENT : ({comment})",
        "TYPE : CVRP",
        f"DIMENSION : {len(instance.coordinates)}",
        f"EDGE_WEIGHT_TYPE : {_edge_weight_type(instance.metric)}",
        f"CAPACITY : {instance.capacity}",
        f"VEHICLES : {instance.vehicle_count}",
        "NODE_COORD_SECTION",
    ]
    lines += [f"{k + 1} {x!r} {y!r}" for k, (x, y) in enumerate(instance.coordinates)]
    lines.append("DEMAND_SECTION")
    lines += [f"{k + 1} {d}" for k, d in enumerate(instance.demands)]
    lines += ["DEPOT_SECTION", f"{instance.depot + 1}", "-1", "EOF"]
    return "\n".join(lines) + "\n"


def write_dimacs(instance: McpInstance) -> str:
    edges = instance.edges
    lines = [f"c {instance.name}" if instance.name else "c generated",
             f"p edge {instance.vertex_count} {len(edges)}"]
    lines += [f"e {u + 1} {v + 1}" for u, v in edges]
    return "\n".join(lines) + "\n"


def load_instance(path: str | Path, problem: str, metric: Metric | None = None):
    text = Path(path).read_text(encoding="utf-8")
    name = Path(path).stem
    if problem == "tsp":
        inst = parse_tsp(text, metric)
    elif problem == "vrp":
        inst = parse_vrp(text, metric)
    elif problem == "mcp":
        return parse_dimacs_clq(text, name=name)
    else:
        raise ValueError(f"unknown problem kind {problem!r}")
    return inst if inst.name else dataclasses.replace(inst, name=name)


def format_instance(instance) -> str:
    if isinstance(instance, TspInstance):
        return write_tsp(instance)
    if isinstance(instance, VrpInstance):
        return write_vrp(instance)
    if isinstance(instance, McpInstance):
        return write_dimacs(instance)
    raise TypeError(f"cannot serialize {type(instance).__name__}")


# --- results ---------------------------------------------------------------

SUMMARY_HEADER = ("instance", "algorithm", "seed", "config", "best", "generations", "wall_time_s")


@dataclass(frozen=True)
class ResultRecord:
    instance: str
    algorithm: str
    seed: int
    config: str
    best: float
    generations: int
    wall_time: float

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (self.instance, self.algorithm, self.seed, self.config)

    def trajectory_name(self) -> str:
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", f"{self.instance}__{self.algorithm}__s{self.seed}__{self.config}")
        return f"{safe}.csv"


def _fmt(value: float) -> str:
    return repr(float(value))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_csv(records: Iterable[ResultRecord], record_time: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for r in sorted(records, key=lambda r: r.key):
        wall = f"{r.wall_time:.6f}" if record_time else "0"
        writer.writerow([r.instance, r.algorithm, r.seed, r.config, _fmt(r.best), r.generations, wall])
    return buf.getvalue()


def trajectory_csv(trajectory: Sequence[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("generation", "best_objective"))
    for gen, value in enumerate(trajectory):
        writer.writerow((gen, _fmt(value)))
    return buf.getvalue()


def write_results(records: Sequence[ResultRecord], trajectories: Mapping[tuple, Sequence[float]],
                  destination: str | Path, record_time: bool = True) -> list[Path]:
    """Write ``summary.csv`` plus one trajectory CSV per record.

    ``trajectories`` is keyed by :attr:`ResultRecord.key`.  With
    ``record_time=False`` the wall-time column is zeroed so reruns are
    byte-identical.
    """
    dest = Path(destination)
    written = []
    summary = dest / "summary.csv"
    _atomic_write(summary, summary_csv(records, record_time))
    written.append(summary)
    for record in sorted(records, key=lambda r: r.key):
        traj = trajectories.get(record.key)
        if traj is None:
            continue
        path = dest / "trajectories" / record.trajectory_name()
        _atomic_write(path, trajectory_csv(traj))
        written.append(path)
    return written


def read_summary(path: str | Path) -> list[ResultRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [ResultRecord(r["instance"], r["algorithm"], int(r["seed"]), r["config"],
                         float(r["best"]), int(r["generations"]), float(r["wall_time_s"]))
            for r in rows]


def atomic_write_text(path: str | Path, text: str):
    _atomic_write(Path(path), text)

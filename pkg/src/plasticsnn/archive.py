"""Text archives of populations and CSV export of episode traces.

Archive grammar, one record per line::

    format 1
    seed <run seed>
    generation <n>
    genome <id> <fitness> <feasible 0|1>
    node <id> <layer> <kind>
    conn <innov> <from> <to> <weight> <enabled> <recurrent> <k_m> <k_c>

``node`` and ``conn`` lines belong to the closest preceding ``genome``.
Floats carry 17 significant digits, so parse(serialize(p)) == p exactly.
Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ArchiveParseError
from .fitness import FitnessReport
from .genome import LAYER_KIND, ConnGene, Genome, NodeGene

FORMAT_VERSION = 1
TRACE_HEADER = "t,z_ref,z,v_z,thrust"


@dataclass
class PopulationArchive:
    seed: int = 0
    generation: int = 0
    genomes: list[Genome] = field(default_factory=list)


def _f(x: float) -> str:
    return format(float(x), ".17g")


def serialize_population(archive: PopulationArchive) -> str:
    lines = [f"format {FORMAT_VERSION}", f"seed {archive.seed}", f"generation {archive.generation}"]
    for g in archive.genomes:
        lines.append(f"genome {g.genome_id} {_f(g.fitness)} {int(g.feasible)}")
        for nid in sorted(g.nodes):
            n = g.nodes[nid]
            lines.append(f"node {n.node_id} {n.layer} {n.kind}")
        for c in g.sorted_conns():
            lines.append(f"conn {c.innovation} {c.src} {c.dst} {_f(c.weight)} {int(c.enabled)} "
                         f"{int(c.recurrent)} {_f(c.k_m)} {_f(c.k_c)}")
    return "\n".join(lines) + "\n"


def _flag(tok: str, lineno: int) -> bool:
    if tok not in ("0", "1"):
        raise ArchiveParseError(lineno, f"expected 0 or 1, got {tok!r}")
    return tok == "1"


def parse_population(text: str) -> PopulationArchive:
    archive = PopulationArchive()
    header_seen = set()
    current: Genome | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind, args = tok[0], tok[1:]
        try:
            if kind in ("format", "seed", "generation"):
                if len(args) != 1:
                    raise ArchiveParseError(lineno, f"{kind} takes one value")
                if current is not None:
                    raise ArchiveParseError(lineno, f"{kind} must precede genome records")
                value = int(args[0])
                if kind == "format" and value != FORMAT_VERSION:
                    raise ArchiveParseError(lineno, f"unsupported archive format {value}")
                if kind == "seed":
                    archive.seed = value
                elif kind == "generation":
                    archive.generation = value
                header_seen.add(kind)
            elif kind == "genome":
                if len(args) != 3:
                    raise ArchiveParseError(lineno, "genome takes id, fitness, feasible")
                current = Genome(int(args[0]), fitness=float(args[1]), feasible=_flag(args[2], lineno))
                archive.genomes.append(current)
            elif kind == "node":
                if current is None:
                    raise ArchiveParseError(lineno, "node before any genome")
                if len(args) != 3:
                    raise ArchiveParseError(lineno, "node takes id, layer, kind")
                if args[1] not in LAYER_KIND:
                    raise ArchiveParseError(lineno, f"unknown layer {args[1]!r}")
                nid = int(args[0])
                current.nodes[nid] = NodeGene(nid, args[1], args[2])
            elif kind == "conn":
                if current is None:
                    raise ArchiveParseError(lineno, "conn before any genome")
                if len(args) != 8:
                    raise ArchiveParseError(lineno, "conn takes 8 fields")
                innov = int(args[0])
                if innov in current.conns:
                    raise ArchiveParseError(lineno, f"duplicate innovation {innov}")
                current.conns[innov] = ConnGene(
                    innov, int(args[1]), int(args[2]), float(args[3]), _flag(args[4], lineno),
                    _flag(args[5], lineno), float(args[6]), float(args[7]))
            else:
                raise ArchiveParseError(lineno, f"unknown record {kind!r}")
        except ValueError as exc:
            if isinstance(exc, ArchiveParseError):
                raise
            raise ArchiveParseError(lineno, str(exc)) from exc
    if "format" not in header_seen:
        raise ArchiveParseError(0, "missing format header")
    return archive


def write_population(path: str | os.PathLike, archive: PopulationArchive) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(serialize_population(archive))


def read_population(path: str | os.PathLike) -> PopulationArchive:
    with open(path) as fh:
        return parse_population(fh.read())


def read_champion(path: str | os.PathLike) -> Genome:
    """First genome of an archive; champion files hold exactly one."""
    archive = read_population(path)
    if not archive.genomes:
        raise ArchiveParseError(0, f"{path} holds no genome")
    return archive.genomes[0]


def trace_csv(trace: np.ndarray) -> str:
    lines = [TRACE_HEADER]
    lines += [",".join(_f(x) for x in row) for row in trace]
    return "\n".join(lines) + "\n"


def export_trace(report: FitnessReport, path: str | os.PathLike) -> None:
    if report.trace is None:
        raise ValueError("report carries no trace; evaluate with keep_trace=True")
    with open(path, "w", newline="\n") as fh:
        fh.write(trace_csv(report.trace))

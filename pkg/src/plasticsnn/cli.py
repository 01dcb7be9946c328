"""Command-line entry point: ``plasticsnn <command> [options]``.

Exit status is 0 on success, 2 on a configuration or usage error and 1 on
any other failure. Outputs go to the ``--out`` directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from . import archive
from .config import RunConfig
from .errors import ConfigError
from .harness import (ExperimentConfig, Plant, RunPair, best_pair, evaluate, identified_plant,
                      pid_comparison, plasticity_validation, run_stage1, run_stage2,
                      transfer_study)
from .neat import EvolutionResult
from .plants import identify_heave, truth_accel, validate_identification
from .stats import column_mean, mann_whitney_u

log = logging.getLogger("plasticsnn")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit through main() so status codes stay uniform
        raise _UsageError(f"{self.prog}: {message}")


def _write_history(path: Path, result: EvolutionResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in dataclasses.fields(result.history[0])]
        w.writerow(names)
        for h in result.history:
            w.writerow([getattr(h, n) if not isinstance(getattr(h, n), float) else repr(getattr(h, n))
                        for n in names])


def _save_result(out: Path, stage: int, seed: int, result: EvolutionResult) -> None:
    archive.write_population(out / f"population_stage{stage}.txt",
                             archive.PopulationArchive(seed, result.generations, result.population))
    archive.write_population(out / f"champion_stage{stage}.txt",
                             archive.PopulationArchive(seed, result.generations, [result.champion]))
    _write_history(out / f"history_stage{stage}.csv", result)


def _progress(gen, _pop, stats):
    log.info("generation %d: best %.5f (feasible=%s), best ever %.5f", gen, stats.best_fitness,
             stats.best_feasible, stats.best_ever_fitness)


def _genome_path(args, default: str) -> Path:
    return Path(args.genome) if args.genome else args.out / default


def cmd_identify(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    model, t_h = identify_heave(lambda t, v: truth_accel(t, v, cfg.truth))
    _, _, corr, rmse = validate_identification(model, cfg.truth)
    text = (f"# identified at hover thrust {t_h!r}\n"
            f"identified.k_T = {model.k_T!r}\nidentified.k_v = {model.k_v!r}\n"
            f"identified.b_id = {model.b_id!r}\n")
    (args.out / "identified.cfg").write_text(text)
    print(text, end="")
    print(f"# open-loop validation: correlation {corr:.4f}, rmse {rmse:.4f} m")


def cmd_evolve(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    result = run_stage1(cfg, args.seed, _progress)
    _save_result(args.out, 1, args.seed, result)
    c = result.champion
    print(f"champion {c.genome_id}: fitness {c.fitness:.5f} feasible {c.feasible} "
          f"after {result.generations} generations")


def cmd_evolve_plastic(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    champion = archive.read_champion(_genome_path(args, "champion_stage1.txt"))
    result = run_stage2(champion, cfg, args.seed, _progress)
    _save_result(args.out, 2, args.seed, result)
    c = result.champion
    print(f"plastic champion {c.genome_id}: fitness {c.fitness:.5f} feasible {c.feasible} "
          f"after {result.generations} generations")


def _plant(name: str, cfg: ExperimentConfig) -> Plant:
    return Plant.truth(cfg.truth) if name == "truth" else identified_plant(cfg)[1]


def cmd_eval(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    genome = archive.read_champion(_genome_path(args, "champion_stage1.txt"))
    report = evaluate(genome, _plant(args.plant, cfg), args.plastic, cfg.episode, cfg.network)
    if args.trace:
        archive.export_trace(report, args.trace)
    print(f"fitness {report.fitness:.5f} feasible {report.feasible} "
          f"mae {report.mean_abs_error:.4f} m steps {report.steps_in_bounds}/{report.total_steps}")


def cmd_transfer_study(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    pairs = []
    for k in range(args.runs):
        seed = args.seed + k
        s1 = run_stage1(cfg, seed)
        s2 = run_stage2(s1.champion, cfg, seed)
        pairs.append(RunPair(seed, s1, s2))
        for tag, res in (("fixed", s1), ("plastic", s2)):
            archive.write_population(args.out / f"run{k + 1}_{tag}.txt",
                                     archive.PopulationArchive(seed, res.generations, [res.champion]))
        log.info("run %d (seed %d) done", k + 1, seed)
    study = transfer_study(pairs, cfg)
    table = study.table()
    (args.out / "transfer_table.csv").write_text(table + "\n")
    best = best_pair(pairs)
    archive.write_population(args.out / "best_plastic.txt",
                             archive.PopulationArchive(best.seed, best.stage2.generations, [best.plastic]))
    print(table)
    print(f"plastic better in {study.plastic_wins}/{len(pairs)} runs; "
          f"U = {study.u:g}, significant = {str(study.significant).lower()}")


def cmd_validate_plasticity(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    genome = archive.read_champion(_genome_path(args, "champion_stage2.txt"))
    episodes = args.episodes if args.episodes is not None else int(run["run.episodes"])
    reports = plasticity_validation(genome, Plant.truth(cfg.truth), cfg, episodes)
    lines = ["episode,fitness,mae_m,feasible"]
    for i, r in enumerate(reports, 1):
        lines.append(f"{i},{r.fitness!r},{r.mean_abs_error!r},{int(r.feasible)}")
        archive.export_trace(r, args.out / f"validation_episode{i}.csv")
    (args.out / "validation.csv").write_text("\n".join(lines) + "\n")
    print(" -> ".join(f"{r.fitness:.5f}" for r in reports))


def cmd_compare_pid(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    genome = archive.read_champion(_genome_path(args, "champion_stage2.txt"))
    cmp = pid_comparison(genome, cfg)
    (args.out / "pid_comparison.csv").write_text(cmp.table() + "\n")
    archive.export_trace(cmp.snn, args.out / "trace_snn.csv")
    archive.export_trace(cmp.pid, args.out / "trace_pid.csv")
    print(cmp.table())
    p = cmp.pid_cfg
    print(f"pid gains kp={p.kp:.4g} ki={p.ki:.4g} kd={p.kd:.4g}")


def read_column(path: str) -> list[float]:
    """Numbers from the last field of each CSV row.

    Non-numeric rows (headers) and the ``mean`` summary row of a transfer
    table are skipped.
    """
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "mean":
                continue
            try:
                values.append(float(row[-1]))
            except ValueError:
                continue
    if not values:
        raise ConfigError(f"{path}: no numeric values")
    return values


def cmd_stats(args, run: RunConfig, cfg: ExperimentConfig) -> None:
    a, b = read_column(args.csv_a), read_column(args.csv_b)
    u, sig = mann_whitney_u(a, b, args.alpha)
    print(f"n1={len(a)} n2={len(b)} mean1={column_mean(a):.4f} mean2={column_mean(b):.4f}")
    print(f"U={u:g} significant={str(sig).lower()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value run configuration")
    common.add_argument("--seed", type=int, help="run seed (overrides run.seed)")
    common.add_argument("--out", type=Path, help="output directory (default: current)")
    common.add_argument("--workers", type=int, help="parallel evaluation processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="plasticsnn", description="Evolve plastic spiking controllers for heave control.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("identify", parents=[common], help="identify the linear heave model")
    sub.add_parser("evolve", parents=[common], help="stage 1: topology and weights")
    sp = sub.add_parser("evolve-plastic", parents=[common], help="stage 2: Hebbian coefficients")
    sp.add_argument("--genome", help="champion archive (default: <out>/champion_stage1.txt)")
    sp = sub.add_parser("eval", parents=[common], help="fly one episode")
    sp.add_argument("--genome", help="genome archive (default: <out>/champion_stage1.txt)")
    sp.add_argument("--plant", choices=("identified", "truth"), default="identified")
    sp.add_argument("--plastic", action="store_true")
    sp.add_argument("--trace", help="write the episode trace CSV here")
    sp = sub.add_parser("transfer-study", parents=[common], help="fixed vs plastic on the truth plant")
    sp.add_argument("--runs", type=int)
    sp = sub.add_parser("validate-plasticity", parents=[common], help="repeated plastic episodes")
    sp.add_argument("--genome", help="genome archive (default: <out>/champion_stage2.txt)")
    sp.add_argument("--episodes", type=int)
    sp = sub.add_parser("compare-pid", parents=[common], help="plastic SNN vs tuned PID")
    sp.add_argument("--genome", help="genome archive (default: <out>/champion_stage2.txt)")
    sp = sub.add_parser("stats", parents=[common], help="statistics on result columns")
    ssub = sp.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    mwu = ssub.add_parser("mwu", help="two-tailed Mann-Whitney U test")
    mwu.add_argument("csv_a")
    mwu.add_argument("csv_b")
    mwu.add_argument("--alpha", type=float, default=0.05)
    return p


COMMANDS = {
    "identify": cmd_identify,
    "evolve": cmd_evolve,
    "evolve-plastic": cmd_evolve_plastic,
    "eval": cmd_eval,
    "transfer-study": cmd_transfer_study,
    "validate-plasticity": cmd_validate_plasticity,
    "compare-pid": cmd_compare_pid,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run = RunConfig.load(args.config)
        if args.seed is not None:
            run.values["run.seed"] = args.seed
        if args.workers is not None:
            run.values["run.workers"] = args.workers
        if run["run.workers"] < 1:
            raise ConfigError("workers must be at least 1")
        if getattr(args, "runs", None) is None and args.command == "transfer-study":
            args.runs = int(run["run.runs"])
        if getattr(args, "runs", 1) < 1:
            raise ConfigError("--runs must be at least 1")
        if getattr(args, "episodes", None) is not None and args.episodes < 1:
            raise ConfigError("--episodes must be at least 1")
        args.seed = int(run["run.seed"])
        args.out = args.out or Path(".")
        cfg = run.experiment()
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, run, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

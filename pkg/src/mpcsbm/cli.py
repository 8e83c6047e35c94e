"""Batch driver: `mpcsbm generate | run | report`.

Exit codes: 0 when every cell executed (whether or not it recovered the
clusters), 1 when a cell crashed, 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ParameterError
from .evaluate import ALGORITHMS, ExperimentConfig, emit_plotdata, read_reports, run_experiment
from .sbm import generate_sbm, write_edge_list

EXIT_OK, EXIT_CRASH, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcsbm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write one edge list per (grid cell, seed)")
    gen.add_argument("--config", required=True, help="experiment config (JSON)")
    gen.add_argument("--out", help="output directory (default: the config's out)")
    gen.add_argument("--seed-offset", type=int, default=0)

    run = sub.add_parser("run", help="run the grid and write report.csv")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--out", help="output directory (default: the config's out)")
    run.add_argument("--seed-offset", type=int, default=0)
    run.add_argument("--algo", choices=ALGORITHMS, help="override the config's algorithm")
    run.add_argument("--ledgers", action="store_true", help="also write one round ledger per simulated run")

    rep = sub.add_parser("report", help="turn report.csv into plot-data files")
    rep.add_argument("--config", help="experiment config; supplies the default --out")
    rep.add_argument("--out", help="directory holding report.csv")
    return ap


def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None:
        return Path(cfg.out)
    raise ParameterError("--out is required when no --config is given")


def cmd_generate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = _out_dir(args, cfg) / "instances"
    out.mkdir(parents=True, exist_ok=True)
    seen = set()
    for params, _, _ in cfg.cells(args.seed_offset):
        key = (params.n, params.k, params.p, params.q, params.seed)
        if key in seen:
            continue
        seen.add(key)
        params.validate()
        inst = generate_sbm(params)
        path = out / f"sbm_n{params.n}_k{params.k}_p{params.p!r}_q{params.q!r}_seed{params.seed}.txt"
        write_edge_list(inst, path)
        print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    for params, _, _ in cfg.cells(args.seed_offset):
        params.validate()
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    ledgers = out / "ledgers" if args.ledgers else None
    n_cells = n_recovered = 0
    for rep in run_experiment(cfg, csv_path, args.seed_offset, args.algo, ledger_dir=ledgers):
        n_cells += 1
        n_recovered += rep.recovered
        status = "recovered" if rep.recovered else f"failed({rep.fail_stage or rep.misclassified})"
        print(f"{rep.algorithm} n={rep.n} k={rep.k} p={rep.p} q={rep.q} seed={rep.seed} "
              f"rounds={rep.rounds} {status}")
    print(f"{n_recovered}/{n_cells} cells recovered; report at {csv_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else None
    out = _out_dir(args, cfg)
    csv_path = out / "report.csv"
    if not csv_path.exists():
        raise ParameterError(f"no report at {csv_path}; run first")
    for path in emit_plotdata(read_reports(csv_path), out / "plots"):
        print(path)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # a crashed cell means the sweep did not execute fully
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CRASH


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    fogplace run      --config run.ini --out results/
    fogplace grid     --config grid.ini --out results/ --parallel 4
    fogplace validate --config run.ini
    fogplace gen-topology | gen-workload | export-plans --out DIR

Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
run fails part-way.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config, write_config
from .engine import (build_network, build_profiles, compare_strategies, expand_grid,
                     round_requests, run_experiment, save_run, write_grid_outputs)
from .topology import TopologyError, write_topology
from .workload import WorkloadError, write_profiles_csv, write_requests_csv

LOG = logging.getLogger("fogplace")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI or JSON config file")
    common.add_argument("--out", help="output directory (default: $FOGPLACE_OUT)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key; repeatable")
    common.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    common.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="fogplace", description="Decentralized IoT service placement simulator")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, text in (("run", "run one experiment"),
                       ("grid", "run the configured cross-product of experiments"),
                       ("validate", "check a config without running it"),
                       ("gen-topology", "write the network as edge list + node CSV"),
                       ("gen-workload", "write workload profiles and request dumps"),
                       ("export-plans", "run and dump every agent's candidate plans")):
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _out_dir(args, needs: bool = True) -> Path | None:
    out = args.out or os.environ.get("FOGPLACE_OUT")
    if not out:
        if needs:
            raise UsageError("no output directory: pass --out or set FOGPLACE_OUT")
        return None
    path = Path(out)
    if path.exists() and not path.is_dir():
        raise UsageError(f"{path} exists and is not a directory")
    if path.exists() and any(path.iterdir()) and not args.force:
        raise UsageError(f"{path} is not empty; use --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_validate(args, cfg, grid) -> int:
    if args.command == "validate":
        cells = expand_grid(cfg, grid)
        print(f"config ok: strategy={cfg.strategy} topology={cfg.topology} n={cfg.n} "
              f"hops={cfg.hops} lam={cfg.lam} profiles={list(cfg.profiles)} seed={cfg.seed}")
        print(f"grid: {len(cells)} cells")
    return EXIT_OK


def _cmd_run(args, cfg, grid, export=False) -> int:
    out = _out_dir(args)
    write_config(cfg, out / "config.ini")
    plan_dir = out / "plans" if (export or cfg.export_plans) else None
    if plan_dir is not None:
        cfg = replace(cfg, strategy="epos")
    report = run_experiment(cfg, plan_dir=plan_dir, workers=args.parallel)
    save_run(report, out)
    if not report.valid:
        LOG.error("run failed: %s", report.error)
        return EXIT_RUNTIME
    mean = report.aggregate()
    print(f"{cfg.strategy}: variance={mean['variance_overall']:.6g} "
          f"violation_rate={mean['violation_rate']:.4f} unhosted={mean['unhosted']:.1f} -> {out}")
    return EXIT_OK


def _cmd_grid(args, cfg, grid) -> int:
    out = _out_dir(args)
    cells, reports, rows = compare_strategies(cfg, grid, parallel=args.parallel)
    write_grid_outputs(cells, reports, rows, out)
    failed = [r for r in reports if not r.valid]
    print(f"{len(cells)} cells, {len(failed)} failed -> {out}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_gen_topology(args, cfg, grid) -> int:
    out = _out_dir(args)
    g = build_network(cfg)
    write_topology(g, out / "topology.edges", out / "nodes.csv")
    print(f"{cfg.topology} n={g.n} edges={len(g.edges)} bridges={g.meta.get('bridges', 0)} -> {out}")
    return EXIT_OK


def _cmd_gen_workload(args, cfg, grid) -> int:
    out = _out_dir(args)
    g = build_network(cfg)
    profiles = build_profiles(cfg)
    write_profiles_csv(profiles, out / "profiles.csv")
    offset = 0
    for p in profiles:
        reqs = round_requests(cfg, g, p, offset)
        offset += len(reqs)
        write_requests_csv(reqs, out / f"requests_profile{p.index}.csv")
    print(f"{len(profiles)} profiles, {offset} requests -> {out}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "grid": _cmd_grid,
    "validate": _cmd_validate,
    "gen-topology": _cmd_gen_topology,
    "gen-workload": _cmd_gen_workload,
    "export-plans": lambda a, c, g: _cmd_run(a, c, g, export=True),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.parallel < 1:
        print("fogplace: error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg, grid = load_config(args.config, args.overrides, args.seed)
        if args.command == "grid":
            grid.validate()
        return COMMANDS[args.command](args, cfg, grid)
    except (ConfigError, UsageError, TopologyError, WorkloadError) as exc:
        print(f"fogplace: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        LOG.exception("runtime failure")
        print(f"fogplace: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Round-by-round experiment driver and metrics.

Each round takes one workload profile: materialize its requests, add the
requests carried over from the previous round, run a strategy, apply the
resulting assignments against real capacities, and measure. Services
hold capacity for one round only; the set of deployed services per node
survives into the next round so that re-using a host is free of
deployment traffic.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import place_cloud, place_first_fit
from .config import DISTRIBUTIONS, GridSpec, RunConfig
from .costmodel import (LoadState, StabilityError, check_capacity, deadline_violation,
                        processing_time, utilization_variance)
from .epos import run_epos
from .plangen import AgentView, generate_plans, write_plans
from .topology import KINDS, NetworkGraph, assign_capacities, generate_topology
from .workload import (SyntheticSource, distribute_to_ingress, load_profiles,
                       materialize_requests)

LOG = logging.getLogger(__name__)

# order of rows in metrics.csv
ROUND_METRICS = (
    "requests", "new_requests", "carried_in", "hosted", "fog_hosted", "cloud_hosted",
    "rejected", "plan_unhosted", "carried_out", "dropped", "unhosted",
    "variance_cpu", "variance_mem", "variance_overall",
    "predicted_variance_cpu", "predicted_variance_mem", "predicted_variance_overall",
    "variance_error", "avg_fog_utilization", "avg_fog_cpu_utilization",
    "avg_fog_mem_utilization", "violation_rate", "avg_execution_delay",
    "avg_response_time", "deployment_bytes", "safety_violations", "epos_iterations",
)

# seed stream tags; none depends on strategy, hops or lambda
_S_TOPOLOGY, _S_CAPACITY, _S_PROFILES, _S_REQUESTS, _S_INGRESS, _S_PLANS, _S_TREE = range(11, 18)


class SimulationError(RuntimeError):
    pass


@dataclass
class MetricsReport:
    label: str
    config: dict
    rounds: list[dict] = field(default_factory=list)
    node_utilization: list[tuple[list, list]] = field(default_factory=list)
    iteration_logs: list[list[tuple]] = field(default_factory=list)
    valid: bool = True
    error: str = ""

    def value(self, metric: str, round_index: int = -1) -> float:
        return self.rounds[round_index][metric]

    def aggregate(self) -> dict:
        if not self.rounds:
            return {}
        return {m: float(np.mean([r[m] for r in self.rounds])) for m in ROUND_METRICS}

    def summary(self) -> dict:
        return {"label": self.label, "valid": self.valid, "error": self.error,
                "config": self.config, "rounds": self.rounds, "mean": self.aggregate()}


# ---------------------------------------------------------------- setup

def derive_seed(cfg: RunConfig, tag: int, *extra) -> list[int]:
    return [int(cfg.seed), tag, *map(int, extra)]


def build_network(cfg: RunConfig) -> NetworkGraph:
    g = generate_topology(cfg.topology, cfg.n, cfg.topology_params(),
                          derive_seed(cfg, _S_TOPOLOGY, KINDS.index(cfg.topology), cfg.n),
                          cloud_count=cfg.cloud_count, delay_range=(cfg.delay_min, cfg.delay_max),
                          wan_delay=cfg.wan_delay)
    return assign_capacities(g, cfg.fog_capacity, cfg.cloud_capacity,
                             derive_seed(cfg, _S_CAPACITY, cfg.n), mode=cfg.capacity_mode)


def build_profiles(cfg: RunConfig):
    if cfg.workload == "synthetic":
        src = SyntheticSource(count=cfg.profile_count, seed=derive_seed(cfg, _S_PROFILES),
                              duration_ms=cfg.duration_ms)
        profiles = load_profiles(src)
    else:
        profiles = load_profiles(cfg.workload)
        profiles = [replace(p, duration_ms=cfg.duration_ms) for p in profiles]
    if max(cfg.profiles) >= len(profiles):
        raise SimulationError(f"profile {max(cfg.profiles)} requested, source has {len(profiles)}")
    return [profiles[i] for i in cfg.profiles]


def round_requests(cfg: RunConfig, g: NetworkGraph, profile, id_offset: int):
    reqs = materialize_requests(profile, seed=derive_seed(cfg, _S_REQUESTS, profile.index),
                                id_offset=id_offset)
    return distribute_to_ingress(reqs, g, cfg.distribution,
                                 derive_seed(cfg, _S_INGRESS, DISTRIBUTIONS.index(cfg.distribution),
                                             cfg.n, profile.index))


# ---------------------------------------------------------------- strategies

def _agent_plans(args):
    cfg, g, loads, round_index, batch = args
    out = []
    for a, reqs in batch:
        view = AgentView(a, reqs, g, loads, seed=tuple(derive_seed(cfg, _S_PLANS, round_index, a)),
                         time_scale=cfg.time_scale, reserve=cfg.reserve,
                         retry_next_host=cfg.retry_next_host)
        out.append((a, generate_plans(view, cfg.plan_count, cfg.hops)))
    return out


def _plan_epos(cfg, g, requests, loads, round_index, plan_dir=None, pool=None, workers=1):
    by_agent = defaultdict(list)
    for r in requests:
        by_agent[r.ingress].append(r)
    work = [(a, by_agent.get(a, [])) for a in g.fog_ids]
    if pool is not None and workers > 1:
        # agents are independent; contiguous batches keep results in id order
        size = -(-len(work) // workers)
        batches = [work[i:i + size] for i in range(0, len(work), size)]
        parts = pool.map(_agent_plans, [(cfg, g, loads, round_index, b) for b in batches])
        plans = dict(pair for part in parts for pair in part)
    else:
        plans = dict(_agent_plans((cfg, g, loads, round_index, work)))
    if plan_dir is not None:
        for a in sorted(plans):
            write_plans(plans[a], plan_dir / f"agent{a}.csv")
    caps = g.capacity_matrix()
    baseline = np.concatenate([loads.cpu / caps[:, 0], loads.mem / caps[:, 1]])
    res = run_epos(plans, cfg.lam, cfg.iterations, cfg.metric, fanout=cfg.fanout,
                   seed=derive_seed(cfg, _S_TREE, round_index), baseline=baseline,
                   reorganizations=None if cfg.reorganizations < 0 else cfg.reorganizations)
    ordered = []
    for a in sorted(plans):
        ordered.extend(plans[a][res.selections[a]].assignments.items())
    return ordered, res


def _apply(assignments, requests_by_id, g, loads, caps, reserve):
    """Apply in order; a host lacking realized capacity rejects the request."""
    hosted, rejected = {}, []
    for rid, host in assignments:
        req = requests_by_id[rid]
        if check_capacity(loads.after(host, req), caps[host], reserve):
            loads.add(host, req)
            hosted[rid] = host
        else:
            rejected.append(rid)
    return hosted, rejected


# ---------------------------------------------------------------- run

def _measure(cfg, g, requests, hosted, loads, caps, unbounded_cloud):
    fog = np.array(g.fog_ids)
    util_cpu = np.divide(loads.cpu, caps[:, 0])
    util_mem = np.divide(loads.mem, caps[:, 1])
    vec = np.concatenate([util_cpu, util_mem])
    out = {
        "variance_cpu": utilization_variance(vec, "cpu"),
        "variance_mem": utilization_variance(vec, "mem"),
        "variance_overall": utilization_variance(vec, "overall"),
        "avg_fog_cpu_utilization": float(util_cpu[fog].mean()),
        "avg_fog_mem_utilization": float(util_mem[fog].mean()),
        "avg_fog_utilization": float(np.concatenate([util_cpu[fog], util_mem[fog]]).mean()),
    }
    safety = int(np.sum(np.any(np.stack([loads.cpu, loads.mem, loads.storage], 1) >= caps, axis=1)))
    violations, delays, resp, dep = 0, [], [], 0.0
    by_id = {r.id: r for r in requests}
    for rid in sorted(hosted):
        host, req = hosted[rid], by_id[rid]
        cloud = g.nodes[host].is_cloud
        if cloud and unbounded_cloud:
            e = req.waiting_ms
        else:
            try:
                p = processing_time(caps[host, 0], loads.cpu[host], cfg.time_scale)
            except StabilityError:
                safety += 1
                continue
            link = 0.0 if host == req.ingress else 2.0 * g.path_delay(req.ingress, host)
            e = p + link + req.waiting_ms
        violations += deadline_violation(e, req.deadline)
        delays.append(abs(req.deadline - e))
        resp.append(e)
        if not cloud and req.service not in loads.hosted[host]:
            dep += req.storage
    n_h = len(hosted)
    out.update({
        "violation_rate": violations / n_h if n_h else 0.0,
        "avg_execution_delay": float(np.mean(delays)) if delays else 0.0,
        "avg_response_time": float(np.mean(resp)) if resp else 0.0,
        "deployment_bytes": dep,
        "safety_violations": float(safety),
    })
    return out, (util_cpu[fog].tolist(), util_mem[fog].tolist())


def run_experiment(cfg: RunConfig, plan_dir=None, workers: int = 1) -> MetricsReport:
    """Run every configured profile in order and return per-round metrics.

    ``plan_dir`` (a directory) receives one plan file per agent per round
    for the EPOS strategy. ``workers > 1`` generates plans in a process
    pool; results are identical to a serial run.
    """
    cfg.validate()
    if workers > 1 and cfg.strategy == "epos":
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return _run(cfg, plan_dir, pool, workers)
    return _run(cfg, plan_dir, None, 1)


def _run(cfg, plan_dir, pool, workers) -> MetricsReport:
    report = MetricsReport(cfg.strategy, cfg.to_dict())
    g = build_network(cfg)
    profiles = build_profiles(cfg)
    n = g.n
    unbounded_cloud = cfg.strategy == "cloud"
    caps = g.capacity_matrix().copy()
    if unbounded_cloud:
        caps[g.cloud_ids] = math.inf
    prev_hosted = [set() for _ in range(n)]
    carried = []
    next_id = 0

    try:
        for rnd, profile in enumerate(profiles):
            fresh = round_requests(cfg, g, profile, next_id)
            next_id += len(fresh)
            requests = carried + fresh
            by_id = {r.id: r for r in requests}
            loads = LoadState(np.zeros(n), np.zeros(n), np.zeros(n), prev_hosted)

            plan_unhosted = set()
            iters = 0
            predicted = None
            if cfg.strategy == "cloud":
                ordered = sorted(place_cloud(requests, g).items())
            elif cfg.strategy == "first_fit":
                scratch = loads.copy()
                ordered = list(place_first_fit(requests, g, scratch, self_candidate=cfg.first_fit_self,
                                               reserve=cfg.reserve).items())
            else:
                pdir = None
                if plan_dir is not None:
                    pdir = Path(plan_dir) / f"round{rnd}"
                    pdir.mkdir(parents=True, exist_ok=True)
                ordered, res = _plan_epos(cfg, g, requests, loads, rnd, pdir, pool, workers)
                predicted = res.final.vector
                iters = res.final.iteration
                report.iteration_logs.append([(h.iteration, h.global_cost, h.local_cost, h.weighted_cost)
                                              for h in res.history])
            planned = {rid for rid, _ in ordered}
            plan_unhosted = {r.id for r in requests} - planned

            hosted, rejected = _apply(ordered, by_id, g, loads, caps, cfg.reserve)
            metrics, node_util = _measure(cfg, g, requests, hosted, loads, caps, unbounded_cloud)
            realized = np.concatenate([loads.cpu / caps[:, 0], loads.mem / caps[:, 1]])
            if predicted is None or not rejected:
                # every planned assignment landed: the plan is the realization
                predicted = realized
            for m in ("cpu", "mem", "overall"):
                metrics[f"predicted_variance_{m}"] = utilization_variance(predicted, m)
            metrics["variance_error"] = abs(metrics["predicted_variance_overall"]
                                            - metrics["variance_overall"])

            carried, dropped = [], 0
            for r in requests:
                if r.id in hosted:
                    continue
                if r.deferrals >= cfg.max_deferrals:
                    dropped += 1
                else:
                    carried.append(replace(r, waiting_ms=r.waiting_ms + cfg.duration_ms,
                                           deferrals=r.deferrals + 1))
            n_cloud = sum(1 for h in hosted.values() if g.nodes[h].is_cloud)
            metrics.update({
                "requests": float(len(requests)), "new_requests": float(len(fresh)),
                "carried_in": float(len(requests) - len(fresh)), "hosted": float(len(hosted)),
                "fog_hosted": float(len(hosted) - n_cloud), "cloud_hosted": float(n_cloud),
                "rejected": float(len(rejected)), "plan_unhosted": float(len(plan_unhosted)),
                "carried_out": float(len(carried)), "dropped": float(dropped),
                "unhosted": float(len(rejected) + len(plan_unhosted)),
                "epos_iterations": float(iters),
            })
            if len(hosted) + len(carried) + dropped != len(requests):
                raise SimulationError(f"round {rnd}: request accounting does not balance")
            report.rounds.append({m: float(metrics[m]) for m in ROUND_METRICS})
            report.node_utilization.append(node_util)

            nxt = [set() for _ in range(n)]
            for rid, host in hosted.items():
                if not g.nodes[host].is_cloud:
                    nxt[host].add(by_id[rid].service)
            prev_hosted = nxt
    except Exception as exc:  # noqa: BLE001 - keep the partial report
        LOG.error("run aborted: %s", exc)
        report.valid = False
        report.error = f"{type(exc).__name__}: {exc}"
    return report


# ---------------------------------------------------------------- output

def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "metric", "value"])
        for rnd, row in enumerate(report.rounds):
            for m in ROUND_METRICS:
                w.writerow([rnd, m, repr(row[m])])


def write_iteration_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "global_cost", "local_cost", "weighted_cost"])
        for it, gc, lc, wc in rows:
            w.writerow([it, repr(gc), repr(lc), repr(wc)])


def write_summary(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(repr(o))


def save_run(report: MetricsReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, out / "metrics.csv")
    write_summary(report, out / "summary.json")
    for rnd, rows in enumerate(report.iteration_logs):
        write_iteration_log(rows, out / f"iterations_round{rnd}.csv")
    figs = out / "figures"
    figs.mkdir(exist_ok=True)
    _write_long(figs / "fig7_node_utilization.csv",
                ["round", "node_rank", "cpu", "mem"],
                [(rnd, k, repr(c), repr(m))
                 for rnd, (cpu, mem) in enumerate(report.node_utilization)
                 for k, (c, m) in enumerate(zip(cpu, mem))])


def _write_long(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- grids

def cell_id(cfg: RunConfig) -> str:
    h = "inf" if math.isinf(cfg.hops) else str(int(cfg.hops))
    parts = [cfg.strategy, cfg.topology, f"n{cfg.n}", cfg.distribution, f"s{cfg.seed}"]
    if cfg.strategy == "epos":
        parts += [f"h{h}", f"lam{cfg.lam:g}"]
    return "_".join(parts)


def expand_grid(base: RunConfig, grid: GridSpec) -> list[RunConfig]:
    """Every cell of the grid; baselines ignore hops and lambda, so they appear once."""
    grid.validate()
    cells, seen = [], set()
    for strategy in grid.strategies:
        for topo in grid.topologies:
            for n in grid.sizes:
                for dist in grid.distributions:
                    for seed in grid.seeds:
                        for hops in grid.hops:
                            for lam in grid.lambdas:
                                if strategy == "epos":
                                    h, lm = float(hops), float(lam)
                                else:
                                    h, lm = base.hops, base.lam
                                cfg = replace(base, strategy=strategy, topology=topo, n=int(n),
                                              distribution=dist, seed=int(seed), hops=h, lam=lm)
                                key = cell_id(cfg)
                                if key not in seen:
                                    seen.add(key)
                                    cells.append(cfg.validate())
    return cells


def _run_cell(cfg: RunConfig) -> MetricsReport:
    try:
        return run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - one failed cell must not sink the grid
        return MetricsReport(cfg.strategy, cfg.to_dict(), valid=False, error=f"{type(exc).__name__}: {exc}")


def run_cells(cells, parallel: int = 1) -> list[MetricsReport]:
    if parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            return list(ex.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


_CMP_METRICS = ("variance_overall", "variance_cpu", "variance_mem", "avg_fog_utilization",
                "violation_rate", "avg_execution_delay", "variance_error", "unhosted",
                "cloud_hosted", "deployment_bytes")


def comparison_table(cells, reports) -> list[dict]:
    """One row per (cell, round), with First Fit differences and normalized error."""
    rows = []
    ff = {}
    for cfg, rep in zip(cells, reports):
        if cfg.strategy == "first_fit" and rep.valid:
            ff[(cfg.topology, cfg.n, cfg.distribution, cfg.seed)] = rep
    for cfg, rep in zip(cells, reports):
        for rnd, metrics in enumerate(rep.rounds):
            row = {"cell": cell_id(cfg), "strategy": cfg.strategy, "topology": cfg.topology,
                   "n": cfg.n, "distribution": cfg.distribution, "seed": cfg.seed,
                   "hops": "inf" if math.isinf(cfg.hops) else int(cfg.hops),
                   "lam": cfg.lam, "round": rnd, "profile": cfg.profiles[rnd], "valid": rep.valid}
            row.update({m: metrics[m] for m in _CMP_METRICS})
            base = ff.get((cfg.topology, cfg.n, cfg.distribution, cfg.seed))
            if cfg.strategy == "epos" and base is not None and rnd < len(base.rounds):
                for m in ("variance_overall", "avg_execution_delay", "avg_fog_utilization"):
                    row[f"{m}_diff_first_fit"] = base.rounds[rnd][m] - metrics[m]
            rows.append(row)
        if not rep.rounds:
            rows.append({"cell": cell_id(cfg), "strategy": cfg.strategy, "topology": cfg.topology,
                         "n": cfg.n, "distribution": cfg.distribution, "seed": cfg.seed,
                         "hops": "inf" if math.isinf(cfg.hops) else int(cfg.hops),
                         "lam": cfg.lam, "round": -1, "profile": -1, "valid": False})
    _normalize_error(rows)
    return rows


def _normalize_error(rows) -> None:
    # min-max over the lambda axis of each experiment family
    fam = defaultdict(list)
    for row in rows:
        if row["strategy"] == "epos" and "variance_error" in row:
            fam[(row["topology"], row["n"], row["distribution"], row["seed"],
                 row["hops"], row["round"])].append(row)
    for group in fam.values():
        vals = [r["variance_error"] for r in group]
        lo, hi = min(vals), max(vals)
        for r in group:
            r["variance_error_norm"] = (r["variance_error"] - lo) / (hi - lo) if hi > lo else 0.0


_TABLE_COLUMNS = ("cell", "strategy", "topology", "n", "distribution", "seed", "hops", "lam",
                  "round", "profile", "valid", *_CMP_METRICS,
                  "variance_overall_diff_first_fit", "avg_execution_delay_diff_first_fit",
                  "avg_fog_utilization_diff_first_fit", "variance_error_norm")


def compare_strategies(base: RunConfig, grid: GridSpec, parallel: int = 1):
    """Run a grid; returns (cells, reports, comparison rows)."""
    cells = expand_grid(base, grid)
    if not cells:
        raise ValueError("empty grid")
    reports = run_cells(cells, parallel)
    return cells, reports, comparison_table(cells, reports)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_grid_outputs(cells, reports, rows, out_dir) -> None:
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    for cfg, rep in zip(cells, reports):
        cdir = out / "cells" / cell_id(cfg)
        save_run(rep, cdir)
    _write_long(out / "comparison.csv", _TABLE_COLUMNS,
                [[_fmt(r.get(c)) for c in _TABLE_COLUMNS] for r in rows])
    figs = out / "figures"
    figs.mkdir(exist_ok=True)
    keys = ("topology", "n", "distribution", "seed", "hops", "round", "profile")
    epos = [r for r in rows if r["strategy"] == "epos" and r["round"] >= 0]
    _write_long(figs / "fig6_variance_difference.csv", [*keys, "lam", "value"],
                [[_fmt(r[k]) for k in keys] + [_fmt(r["lam"]), _fmt(r.get("variance_overall_diff_first_fit"))]
                 for r in epos])
    _write_long(figs / "fig8_delay_difference.csv", [*keys, "lam", "value"],
                [[_fmt(r[k]) for k in keys] + [_fmt(r["lam"]), _fmt(r.get("avg_execution_delay_diff_first_fit"))]
                 for r in epos])
    _write_long(figs / "fig9_strategy_metrics.csv", ["cell", "strategy", "round", "metric", "value"],
                [[r["cell"], r["strategy"], r["round"], m, _fmt(r[m])]
                 for r in rows if r["round"] >= 0
                 for m in ("variance_overall", "avg_fog_utilization", "violation_rate",
                           "avg_execution_delay", "cloud_hosted")])
    _write_long(figs / "fig10_variance_error.csv", [*keys, "lam", "raw", "normalized"],
                [[_fmt(r[k]) for k in keys] + [_fmt(r["lam"]), _fmt(r["variance_error"]),
                                               _fmt(r.get("variance_error_norm"))]
                 for r in epos])

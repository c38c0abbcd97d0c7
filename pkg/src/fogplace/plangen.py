"""Local generation of candidate placement plans by one agent.

Each plan pairs the agent's requests, tightest slack first, with hosts
drawn at random from its h-hop neighbourhood and ordered nearest first.
A host that cannot take its paired request sends it to the closest cloud,
and failing that the request stays unhosted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costmodel import (DEFAULT_RESERVE, DEFAULT_TIME_SCALE, CostBreakdown, LoadState,
                        check_capacity, deadline_violation, processing_time)
from .topology import UNLIMITED, NetworkGraph


@dataclass
class PlacementPlan:
    """One candidate plan.

    ``vector`` holds the utilization this plan adds, CPU ratios for all N
    nodes followed by memory ratios. Prior load is kept out of it so that
    summing plans across agents counts every unit of load once.
    """

    assignments: dict[int, int]
    vector: np.ndarray
    cost: float
    unhosted: tuple[int, ...] = ()
    breakdown: CostBreakdown | None = None

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.assignments.items()))


@dataclass
class AgentView:
    agent: int
    requests: list
    g: NetworkGraph
    prior: LoadState
    seed: Sequence[int] = (0,)
    time_scale: float = DEFAULT_TIME_SCALE
    reserve: float = DEFAULT_RESERVE
    retry_next_host: bool = False
    _cloud: int | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._cloud = self.g.nearest_cloud(self.agent)

    @property
    def cloud(self) -> int | None:
        return self._cloud

    def neighborhood(self, h: float = UNLIMITED) -> list[int]:
        return self.g.neighborhood(self.agent, h)


def _pick_hosts(nb: list[int], count: int, rng) -> list[int]:
    if not nb or count == 0:
        return []
    if len(nb) >= count:
        idx = rng.choice(len(nb), size=count, replace=False)
    else:
        # too few neighbours: cycle one random permutation
        perm = rng.permutation(len(nb))
        idx = np.resize(perm, count)
    # nb is ordered by (hops, id), so sorting positions sorts by proximity
    return [nb[i] for i in np.sort(idx)]


def _one_plan(view: AgentView, ordered: list, nb: list[int], rng) -> PlacementPlan:
    g = view.g
    caps = g.capacity_matrix()
    n = g.n
    loads = view.prior.copy(share_hosted=True)
    own = np.zeros((2, n))
    hosts = _pick_hosts(nb, len(ordered), rng)
    cloud = view.cloud
    assignments: dict[int, int] = {}
    unhosted = []

    for k, req in enumerate(ordered):
        candidates = hosts[k:k + 1] if not view.retry_next_host else hosts[k:]
        chosen = None
        for host in candidates:
            if check_capacity(loads.after(host, req), caps[host], view.reserve):
                chosen = host
                break
        if chosen is None and cloud is not None:
            if check_capacity(loads.after(cloud, req), caps[cloud], view.reserve):
                chosen = cloud
        if chosen is None:
            unhosted.append(req.id)
            continue
        assignments[req.id] = chosen
        loads.add(chosen, req)
        own[0, chosen] += req.cpu
        own[1, chosen] += req.mem

    violations = 0
    deployment = 0.0
    for req in ordered:
        host = assignments.get(req.id)
        if host is None:
            continue
        p = processing_time(caps[host, 0], loads.cpu[host], view.time_scale)
        link = 0.0 if host == req.ingress else 2.0 * g.path_delay(req.ingress, host)
        violations += deadline_violation(p + link + req.waiting_ms, req.deadline)
        if not g.nodes[host].is_cloud and req.service not in view.prior.hosted[host]:
            deployment += req.storage

    breakdown = CostBreakdown(violations, deployment, len(unhosted), len(ordered),
                              sum(r.storage for r in ordered))
    vector = np.concatenate([own[0] / caps[:, 0], own[1] / caps[:, 1]])
    return PlacementPlan(assignments, vector, breakdown.total, tuple(unhosted), breakdown)


def generate_plans(view: AgentView, plan_count: int = 20, h: float = UNLIMITED) -> list[PlacementPlan]:
    """Generate up to ``plan_count`` distinct plans, cheapest first."""
    if plan_count < 1:
        raise ValueError("plan_count must be >= 1")
    ordered = sorted(view.requests, key=lambda r: (r.slack, r.id))
    nb = view.neighborhood(h)
    plans = []
    for q in range(plan_count):
        rng = np.random.default_rng([*view.seed, q])
        plans.append(_one_plan(view, ordered, nb, rng))
    plans.sort(key=lambda p: p.cost)
    return plan_distinctness(plans)


def plan_distinctness(plans: Sequence[PlacementPlan]) -> list[PlacementPlan]:
    seen = set()
    out = []
    for p in plans:
        if p.key in seen:
            continue
        seen.add(p.key)
        out.append(p)
    return out


def write_plans(plans: Sequence[PlacementPlan], path) -> None:
    """One row per plan: index, local cost, ``sid:hid;...`` and the 2N vector."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for idx, p in enumerate(plans):
            mapping = ";".join(f"{s}:{h}" for s, h in sorted(p.assignments.items()))
            w.writerow([idx, repr(p.cost), mapping, *map(repr, p.vector.tolist())])


def read_plans(path) -> list[PlacementPlan]:
    plans = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            mapping = {}
            if row[2]:
                for pair in row[2].split(";"):
                    s, h = pair.split(":")
                    mapping[int(s)] = int(h)
            plans.append(PlacementPlan(mapping, np.array([float(x) for x in row[3:]]), float(row[1])))
    return plans


def parse_hops(h) -> float:
    """Normalise a hop bound given as int, ``None``, ``"inf"`` or ``math.inf``."""
    if h is None:
        return UNLIMITED
    if isinstance(h, str):
        return UNLIMITED if h.strip().lower() in ("inf", "infinity", "unlimited", "∞") else float(int(h))
    return UNLIMITED if math.isinf(h) else float(h)

"""Collective plan selection over a tree overlay.

Agents sit in a balanced tree. Every iteration runs a bottom-up pass in
which each agent, given the previous global response and the fresh
proposals of its children, picks the combination of (accept/reject each
child's proposal, own plan) minimising

    lam * L + (1 - lam) * G

where G is the utilization variance of the estimated global response and
L the estimated mean local plan cost. The top-down pass commits the
accepted proposals and reverts rejected subtrees to their previous choice.
Because the root can always keep the previous global response, G never
increases when ``lam == 0``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .costmodel import row_variance, utilization_variance


class EposError(ValueError):
    pass


@dataclass(frozen=True)
class Tree:
    """Heap-ordered tree: position ``p`` has children ``p*fanout+1 .. p*fanout+fanout``."""

    order: tuple[int, ...]
    fanout: int = 2

    def children_pos(self, p: int) -> range:
        first = p * self.fanout + 1
        return range(first, min(first + self.fanout, len(self.order)))

    def parent_pos(self, p: int) -> int | None:
        return None if p == 0 else (p - 1) // self.fanout

    @property
    def root(self) -> int:
        return self.order[0]

    def children(self, agent: int) -> list[int]:
        p = self.order.index(agent)
        return [self.order[c] for c in self.children_pos(p)]

    def parent(self, agent: int) -> int | None:
        pp = self.parent_pos(self.order.index(agent))
        return None if pp is None else self.order[pp]

    def depth(self) -> int:
        d, p = 0, len(self.order) - 1
        while p > 0:
            p = (p - 1) // self.fanout
            d += 1
        return d


def build_tree(agent_ids: Sequence[int], fanout: int = 2, seed=0) -> Tree:
    if not agent_ids:
        raise EposError("need at least one agent")
    if fanout < 1:
        raise EposError("fanout must be >= 1")
    ids = sorted(agent_ids)
    perm = np.random.default_rng(seed).permutation(len(ids))
    return Tree(tuple(ids[i] for i in perm), fanout)


def weighted_cost(global_component: float, local_component: float, lam: float) -> float:
    return lam * local_component + (1.0 - lam) * global_component


@dataclass
class GlobalResponse:
    vector: np.ndarray
    iteration: int
    global_cost: float
    local_cost: float
    weighted_cost: float
    segment: int = 0


@dataclass
class TreeAgent:
    agent: int
    vectors: np.ndarray          # (plans, 2N)
    costs: np.ndarray            # (plans,)
    selected: int = 0
    children: list[int] = field(default_factory=list)
    parent: int | None = None
    subtree_response: np.ndarray | None = None
    subtree_cost: float = 0.0
    subtree_size: int = 1


@dataclass
class EposResult:
    selections: dict[int, int]
    history: list[GlobalResponse]
    tree: Tree
    trace: list[GlobalResponse] = field(default_factory=list)

    @property
    def final(self) -> GlobalResponse:
        return self.history[-1]


class _Trajectory:
    """Learning state for one tree arrangement."""

    def __init__(self, agents, tree, lam, metric, base_vec, cmax, n_agents, init, rng=None):
        self.tree = tree
        self.lam = lam
        self.metric = metric
        self.base = base_vec
        self.cmax = cmax
        self.n_agents = n_agents
        order = tree.order
        self.order = order
        self.kids = [list(tree.children_pos(p)) for p in range(len(order))]
        self.agents = agents
        for p, a in enumerate(order):
            ag = agents[a]
            ag.children = [order[c] for c in self.kids[p]]
            pp = tree.parent_pos(p)
            ag.parent = None if pp is None else order[pp]
        self.gvar = self._initial(init, rng)
        self.root = agents[order[0]]

    def _initial(self, init, rng):
        # one bottom-up pass in which every agent sees only its own subtree;
        # "cheapest" takes each agent's cheapest plan, "random" a seeded draw
        width = self.base.shape[0]
        gvar = 0.0
        for p in reversed(range(len(self.order))):
            ag = self.agents[self.order[p]]
            child_sum = np.zeros(width)
            child_cost = 0.0
            size = 1
            for c in self.kids[p]:
                ch = self.agents[self.order[c]]
                child_sum = child_sum + ch.subtree_response
                child_cost += ch.subtree_cost
                size += ch.subtree_size
            part = (child_sum + self.base)[None, :] + ag.vectors
            pvar = row_variance(part, self.metric)
            if init == "cheapest" or self.lam == 1.0:
                ag.selected = int(np.argmin(ag.costs))
            elif init == "random":
                ag.selected = int(rng.integers(len(ag.costs)))
            else:
                obj = (self.lam * ((child_cost + ag.costs) / size / self.cmax)
                       + (1.0 - self.lam) * pvar)
                ag.selected = int(np.argmin(obj))
            gvar = float(pvar[ag.selected])
            ag.subtree_response = child_sum + ag.vectors[ag.selected]
            ag.subtree_cost = child_cost + ag.costs[ag.selected]
            ag.subtree_size = size
        return gvar

    def step(self, sigma0, masks_by_k):
        """One bottom-up + top-down iteration; returns the new global variance."""
        lam, order, kids, agents = self.lam, self.order, self.kids, self.agents
        width = self.base.shape[0]
        g_prev = self.root.subtree_response
        L_prev = self.root.subtree_cost
        proposal = {}
        for p in reversed(range(len(order))):
            ag = agents[order[p]]
            children = [agents[order[c]] for c in kids[p]]
            k = len(children)
            if k not in masks_by_k:
                masks_by_k[k] = list(itertools.product((True, False), repeat=k))
            masks = masks_by_k[k]

            child_resp = np.empty((len(masks), width))
            child_cost = np.empty(len(masks))
            for m, mask in enumerate(masks):
                acc = np.zeros(width)
                cc = 0.0
                for ch, take in zip(children, mask):
                    if take:
                        acc = acc + proposal[ch.agent][1]
                        cc += proposal[ch.agent][2]
                    else:
                        acc = acc + ch.subtree_response
                        cc += ch.subtree_cost
                child_resp[m] = acc
                child_cost[m] = cc

            outside = g_prev - ag.subtree_response
            est_base = (outside[None, :] + child_resp) + self.base[None, :]
            est = est_base[:, None, :] + ag.vectors[None, :, :]
            gvar = row_variance(est, self.metric)
            lcost = ((L_prev - ag.subtree_cost) + child_cost[:, None] + ag.costs[None, :]) / self.n_agents
            obj = lam * (lcost / self.cmax) + (1.0 - lam) * (gvar / sigma0)

            # status quo first: a change has to strictly improve the objective
            sq = (len(masks) - 1, ag.selected)
            best = np.unravel_index(int(np.argmin(obj)), obj.shape)
            if not obj[best] < obj[sq]:
                best = sq
            m, q = int(best[0]), int(best[1])
            proposal[ag.agent] = (q, child_resp[m] + ag.vectors[q], child_cost[m] + ag.costs[q],
                                  masks[m], float(gvar[m, q]))

        accepted = {order[0]: True}
        for p in range(len(order)):
            ag = agents[order[p]]
            ok = accepted[ag.agent]
            q, resp, cost, mask, _ = proposal[ag.agent]
            if ok:
                ag.selected = q
                ag.subtree_response = resp
                ag.subtree_cost = cost
            for c, take in zip(kids[p], mask if ok else [False] * len(kids[p])):
                accepted[order[c]] = ok and take
        self.gvar = proposal[self.root.agent][4]
        return self.gvar

    def snapshot(self, t, sigma0, segment):
        L = self.root.subtree_cost / self.n_agents
        return GlobalResponse(self.root.subtree_response.copy(), t, self.gvar, L,
                              weighted_cost(self.gvar / sigma0, L / self.cmax, self.lam), segment)


def run_epos(plans: Mapping[int, Sequence], lam: float = 0.0, iterations: int = 40,
             metric: str = "overall", *, fanout: int = 2, seed=0,
             baseline: np.ndarray | None = None, tol: float = 1e-12,
             init: str = "greedy", reorganizations: int | None = None,
             restart_init: str = "random") -> EposResult:
    """Select one plan per agent.

    ``plans`` maps agent id to its plan list; a plan is anything with a
    ``vector`` (length 2N) and a ``cost``. ``baseline`` is load already on
    the nodes, added to every global response before measuring variance.

    When learning converges before ``iterations`` are spent, the tree is
    rebuilt with a new seeded arrangement and learning restarts from
    ``restart_init`` selections (seeded random by default), until the
    budget runs out or ``reorganizations`` rebuilds have happened (None:
    no limit). The committed selection is the best one seen, so
    ``history`` (committed responses) is monotone in the weighted
    objective; ``trace`` keeps every raw iteration tagged with its tree
    segment.
    """
    if not 0.0 <= lam <= 1.0:
        raise EposError(f"lambda must lie in [0, 1], got {lam}")
    if not plans:
        raise EposError("no agents")
    if init not in ("greedy", "cheapest") or restart_init not in ("greedy", "cheapest", "random"):
        raise EposError(f"unknown initialisation {init!r} / {restart_init!r}")
    agents: dict[int, TreeAgent] = {}
    for a, plist in plans.items():
        if not plist:
            raise EposError(f"agent {a} has no plans")
        agents[a] = TreeAgent(a, np.stack([np.asarray(p.vector, dtype=float) for p in plist]),
                              np.array([float(p.cost) for p in plist]))
    width = next(iter(agents.values())).vectors.shape[1]
    base_vec = np.zeros(width) if baseline is None else np.asarray(baseline, dtype=float)
    n_agents = len(agents)
    cmax = max(float(ag.costs.max()) for ag in agents.values())
    cmax = cmax if cmax > 0 else 1.0
    seed_key = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    masks_by_k: dict = {}

    def new_trajectory(segment):
        # segment 0 keeps the plain seed so a run without reorganization
        # uses the same tree as build_tree(ids, fanout, seed)
        if segment == 0:
            return _Trajectory(agents, build_tree(list(plans), fanout, seed), lam, metric,
                               base_vec, cmax, n_agents, init)
        tree = build_tree(list(plans), fanout, [*seed_key, segment])
        rng = np.random.default_rng([*seed_key, segment, 1])
        return _Trajectory(agents, tree, lam, metric, base_vec, cmax, n_agents, restart_init, rng)

    segment = 0
    traj = new_trajectory(segment)
    sigma0 = traj.gvar if traj.gvar > 0 else 1.0
    current = traj.snapshot(0, sigma0, segment)
    trace = [current]
    best = current
    best_sel = {a: ag.selected for a, ag in agents.items()}
    best_tree = traj.tree
    history = [best]

    for t in range(1, iterations + 1):
        prev = trace[-1]
        if t > 1 and prev.segment == trace[-2].segment and abs(prev.global_cost - trace[-2].global_cost) <= tol:
            if reorganizations is not None and segment >= reorganizations:
                break
            segment += 1
            traj = new_trajectory(segment)
            current = traj.snapshot(t, sigma0, segment)
        else:
            traj.step(sigma0, masks_by_k)
            current = traj.snapshot(t, sigma0, segment)
        trace.append(current)
        if current.weighted_cost < best.weighted_cost:
            best = current
            best_sel = {a: ag.selected for a, ag in agents.items()}
            best_tree = traj.tree
        history.append(GlobalResponse(best.vector, t, best.global_cost, best.local_cost,
                                      best.weighted_cost, best.segment))

    return EposResult(best_sel, history, best_tree, trace)


def global_response_of(plans: Mapping[int, Sequence], selections: Mapping[int, int]) -> np.ndarray:
    """Element-wise sum of the selected plan vectors, recomputed from scratch."""
    total = None
    for a, idx in selections.items():
        v = np.asarray(plans[a][idx].vector, dtype=float)
        total = v.copy() if total is None else total + v
    return total


def brute_force_best(plans: Mapping[int, Sequence], metric: str = "overall",
                     baseline: np.ndarray | None = None) -> np.ndarray:
    """Variance of every combination of one plan per agent (small instances only)."""
    agents = list(plans)
    out = []
    for combo in itertools.product(*(range(len(plans[a])) for a in agents)):
        total = sum(np.asarray(plans[a][i].vector, dtype=float) for a, i in zip(agents, combo))
        if baseline is not None:
            total = total + baseline
        out.append(utilization_variance(total, metric))
    return np.array(out)

"""Comparison strategies: everything to the cloud, and First Fit.

Both return a plain ``{request id: host id}`` mapping; requests missing
from it are unhosted.
"""
from __future__ import annotations

from typing import Sequence

from .costmodel import DEFAULT_RESERVE, LoadState, check_capacity


def place_cloud(requests: Sequence, g) -> dict[int, int]:
    """Send every request to the cloud node nearest its ingress.

    Cloud capacity is treated as unbounded here, so nothing is checked.
    """
    if not g.cloud_ids:
        raise ValueError("cloud strategy needs at least one cloud node")
    cache: dict[int, int] = {}
    out = {}
    for r in requests:
        if r.ingress not in cache:
            cache[r.ingress] = g.nearest_cloud(r.ingress)
        out[r.id] = cache[r.ingress]
    return out


def first_fit_candidates(g, ingress: int, self_candidate: bool = True) -> list[int]:
    """Direct fog neighbours by ascending link latency, ties by id; self first."""
    nbrs = sorted((g.link_delay(ingress, v), v) for v in g.neighbors(ingress)
                  if not g.nodes[v].is_cloud)
    head = [ingress] if self_candidate else []
    return head + [v for _, v in nbrs]


def place_first_fit(requests: Sequence, g, loads: LoadState, *, self_candidate: bool = True,
                    reserve: float = DEFAULT_RESERVE) -> dict[int, int]:
    """First Fit over latency-sorted direct neighbours, else the nearest cloud.

    Requests go in arrival order (ties by id). ``loads`` is updated in
    place. The cloud fallback is capacity-checked like any other node; a
    request that fits nowhere stays unhosted.
    """
    caps = g.capacity_matrix()
    cand_cache: dict[int, list[int]] = {}
    out = {}
    for r in sorted(requests, key=lambda q: (q.arrival_ms, q.id)):
        if r.ingress not in cand_cache:
            cand_cache[r.ingress] = first_fit_candidates(g, r.ingress, self_candidate)
        chosen = None
        for host in cand_cache[r.ingress]:
            if check_capacity(loads.after(host, r), caps[host], reserve):
                chosen = host
                break
        if chosen is None:
            cloud = g.nearest_cloud(r.ingress)
            if cloud is not None and check_capacity(loads.after(cloud, r), caps[cloud], reserve):
                chosen = cloud
        if chosen is not None:
            loads.add(chosen, r)
            out[r.id] = chosen
    return out

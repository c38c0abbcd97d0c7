"""Edge-to-cloud network graphs: generation, capacities, hop queries and file I/O."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LOG = logging.getLogger(__name__)

FOG = "fog"
CLOUD = "cloud"
KINDS = ("BA", "WS", "ER")

# (cpu, mem, storage) defaults: first tuple is the cloud, second the fog aggregate.
DEFAULT_CLOUD_TOTAL = (400.0, 500.0, 200.0)
DEFAULT_FOG_TOTAL = (704.0, 792.5, 313.5)

UNLIMITED = math.inf
_MAX_CONNECT_RETRIES = 10


class TopologyError(ValueError):
    """Invalid topology parameters or a malformed topology file."""


@dataclass(frozen=True)
class NodeSpec:
    id: int
    layer: str
    cpu: float
    mem: float
    storage: float

    def __post_init__(self):
        if self.layer not in (FOG, CLOUD):
            raise TopologyError(f"node {self.id}: unknown layer {self.layer!r}")
        if min(self.cpu, self.mem, self.storage) <= 0:
            raise TopologyError(f"node {self.id}: capacities must be positive")

    @property
    def is_cloud(self) -> bool:
        return self.layer == CLOUD

    def capacity(self) -> np.ndarray:
        return np.array([self.cpu, self.mem, self.storage])


@dataclass
class NetworkGraph:
    """Undirected connected graph of fog and cloud nodes.

    ``delays`` is keyed by ``(u, v)`` with ``u < v``; use :meth:`link_delay`
    for symmetric lookup.
    """

    nodes: list[NodeSpec]
    edges: list[tuple[int, int]]
    delays: dict[tuple[int, int], float]
    kind: str = "BA"
    seed: int = 0
    meta: dict = field(default_factory=dict)
    _adj: list[list[int]] = field(default=None, init=False, repr=False, compare=False)
    _bfs: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        adj = [[] for _ in range(n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self._adj = [sorted(a) for a in adj]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def fog_ids(self) -> list[int]:
        return [nd.id for nd in self.nodes if not nd.is_cloud]

    @property
    def cloud_ids(self) -> list[int]:
        return [nd.id for nd in self.nodes if nd.is_cloud]

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def link_delay(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        return self.delays[(u, v) if u < v else (v, u)]

    def capacity_matrix(self) -> np.ndarray:
        """(N, 3) array of (cpu, mem, storage) capacities indexed by node id."""
        caps = self._bfs.get("caps")
        if caps is None:
            caps = self._bfs["caps"] = np.array([[nd.cpu, nd.mem, nd.storage] for nd in self.nodes])
        return caps

    def _search(self, source: int) -> tuple[np.ndarray, np.ndarray]:
        # BFS tree with neighbours visited in ascending id order; path delay
        # accumulates along that tree so ties resolve deterministically.
        cached = self._bfs.get(source)
        if cached is not None:
            return cached
        hops = np.full(self.n, -1, dtype=np.int64)
        delay = np.zeros(self.n)
        hops[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self._adj[u]:
                if hops[v] < 0:
                    hops[v] = hops[u] + 1
                    delay[v] = delay[u] + self.link_delay(u, v)
                    queue.append(v)
        self._bfs[source] = (hops, delay)
        return hops, delay

    def hops_from(self, source: int) -> np.ndarray:
        return self._search(source)[0]

    def delays_from(self, source: int) -> np.ndarray:
        return self._search(source)[1]

    def hop_distance(self, source: int, dest: int) -> int:
        return int(self._search(source)[0][dest])

    def path_delay(self, source: int, dest: int) -> float:
        """Summed link delay (ms) along the BFS shortest path."""
        return float(self._search(source)[1][dest])

    def neighborhood(self, center: int, h: float = UNLIMITED) -> list[int]:
        """Fog nodes within ``h`` hops of ``center``, ordered by (hops, id)."""
        hops = self._search(center)[0]
        cand = [j for j in self.fog_ids if hops[j] <= h]
        cand.sort(key=lambda j: (hops[j], j))
        return cand

    def nearest_cloud(self, source: int) -> int | None:
        clouds = self.cloud_ids
        if not clouds:
            return None
        d = self._search(source)[1]
        return min(clouds, key=lambda k: (d[k], k))

    def is_connected(self) -> bool:
        return self.n == 0 or bool((self._search(0)[0] >= 0).all())


# -- generation --------------------------------------------------------------

def _ba_edges(n, m, rng):
    if m < 1 or m >= n:
        raise TopologyError(f"BA needs 1 <= m < n, got m={m}, n={n}")
    edges = [(0, j) for j in range(1, m + 1)]
    degree = np.zeros(n)
    degree[0] = m
    degree[1:m + 1] = 1
    for new in range(m + 1, n):
        weights = degree[:new] / degree[:new].sum()
        targets = rng.choice(new, size=m, replace=False, p=weights)
        for t in sorted(int(t) for t in targets):
            edges.append((t, new))
            degree[t] += 1
        degree[new] = m
    return edges


def _ws_edges(n, k, beta, rng):
    if k < 2 or k % 2 or k >= n:
        raise TopologyError(f"WS needs an even ring degree 2 <= k < n, got k={k}, n={n}")
    if not 0.0 <= beta <= 1.0:
        raise TopologyError(f"WS rewiring probability must lie in [0, 1], got {beta}")
    adj = [set() for _ in range(n)]
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() >= beta or v not in adj[u]:
                continue
            if len(adj[u]) >= n - 1:
                continue
            w = int(rng.integers(n))
            while w == u or w in adj[u]:
                w = int(rng.integers(n))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    return sorted((u, v) for u in range(n) for v in adj[u] if u < v)


def _er_edges(n, p, rng):
    if not 0.0 < p <= 1.0:
        raise TopologyError(f"ER edge probability must lie in (0, 1], got {p}")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return [(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])]


def _components(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        comp, stack = [], [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def _bridge(n, edges, rng):
    """Join components with one edge each; returns (edges, number added)."""
    comps = _components(n, edges)
    if len(comps) == 1:
        return edges, 0
    joined = list(comps[0])
    extra = []
    for comp in comps[1:]:
        anchor = joined[int(rng.integers(len(joined)))]
        u, v = sorted((anchor, comp[0]))
        extra.append((u, v))
        joined.extend(comp)
    return sorted(edges + extra), len(extra)


def generate_topology(kind: str, n: int, params: dict | None = None, seed: int = 0, *,
                      cloud_count: int = 1, delay_range: tuple[float, float] = (1.0, 10.0),
                      wan_delay: float = 50.0) -> NetworkGraph:
    """Build a connected BA / WS / ER graph of ``n`` nodes.

    The last ``cloud_count`` ids are cloud nodes. Fog-fog links get a delay
    drawn uniformly from ``delay_range``; links touching a cloud node carry
    ``wan_delay``. Capacities start as the default uniform split and can be
    replaced with :func:`assign_capacities`.
    """
    kind = kind.upper()
    params = dict(params or {})
    if kind not in KINDS:
        raise TopologyError(f"unknown topology kind {kind!r}")
    if n < 2:
        raise TopologyError("a network needs at least two nodes")
    if not 0 < cloud_count < n:
        raise TopologyError(f"cloud_count must lie in [1, n), got {cloud_count}")
    lo, hi = delay_range
    if not 0 <= lo <= hi or wan_delay < 0:
        raise TopologyError("link delays must be non-negative with min <= max")

    structure_ss, delay_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(structure_ss)
    bridges = 0
    if kind == "BA":
        edges = _ba_edges(n, int(params.get("m", 2)), rng)
    else:
        for _ in range(_MAX_CONNECT_RETRIES):
            if kind == "WS":
                edges = _ws_edges(n, int(params.get("k", 4)), float(params.get("beta", 0.1)), rng)
            else:
                edges = _er_edges(n, float(params.get("p", 0.03)), rng)
            if len(_components(n, edges)) == 1:
                break
        else:
            edges, bridges = _bridge(n, edges, rng)
            LOG.info("%s graph (n=%d, seed=%d) patched with %d bridging edges", kind, n, seed, bridges)

    first_cloud = n - cloud_count
    drng = np.random.default_rng(delay_ss)
    draws = drng.uniform(lo, hi, size=len(edges))
    delays = {}
    for (u, v), d in zip(edges, draws):
        delays[(u, v)] = float(wan_delay) if v >= first_cloud else float(d)

    nodes = [NodeSpec(i, CLOUD if i >= first_cloud else FOG, 1.0, 1.0, 1.0) for i in range(n)]
    g = NetworkGraph(nodes, sorted(edges), delays, kind=kind, seed=seed,
                     meta={"bridges": bridges, "params": params})
    return assign_capacities(g, DEFAULT_FOG_TOTAL, DEFAULT_CLOUD_TOTAL)


def assign_capacities(g: NetworkGraph, fog_total: Sequence[float], cloud_total: Sequence[float],
                      heterogeneity_seed: int = 0, *, mode: str = "uniform",
                      alpha: float = 5.0) -> NetworkGraph:
    """Return a copy of ``g`` with fog/cloud capacities split from the totals.

    ``mode="heterogeneous"`` draws one Dirichlet(alpha) weight vector and
    scales every resource by it, so bigger nodes are bigger in all three.
    """
    fog = g.fog_ids
    clouds = g.cloud_ids
    if not fog:
        raise TopologyError("network has no fog nodes")
    fog_total = np.asarray(fog_total, dtype=float)
    cloud_total = np.asarray(cloud_total, dtype=float)
    if (fog_total <= 0).any() or (cloud_total <= 0).any():
        raise TopologyError("capacity totals must be strictly positive")

    if mode == "uniform":
        weights = np.full(len(fog), 1.0 / len(fog))
    elif mode == "heterogeneous":
        weights = np.random.default_rng(heterogeneity_seed).dirichlet(np.full(len(fog), alpha))
    else:
        raise TopologyError(f"unknown capacity mode {mode!r}")

    caps = {}
    for j, w in zip(fog, weights):
        caps[j] = fog_total * w
    for k in clouds:
        caps[k] = cloud_total / len(clouds)
    nodes = [NodeSpec(nd.id, nd.layer, *map(float, caps[nd.id])) for nd in g.nodes]
    meta = dict(g.meta, capacity_mode=mode)
    return NetworkGraph(nodes, list(g.edges), dict(g.delays), kind=g.kind, seed=g.seed, meta=meta)


# -- file I/O ----------------------------------------------------------------

def write_topology(g: NetworkGraph, edge_path, node_path) -> None:
    """Edge list (``u v delay_ms``) plus node CSV (``id,layer,cpu,mem,storage``)."""
    with open(edge_path, "w") as fh:
        seed = json.dumps(g.seed, separators=(",", ":"))
        fh.write(f"# kind={g.kind} seed={seed} n={g.n} bridges={g.meta.get('bridges', 0)}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v} {g.delays[(u, v)]!r}\n")
    with open(node_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "layer", "cpu", "mem", "storage"])
        for nd in g.nodes:
            w.writerow([nd.id, nd.layer, repr(nd.cpu), repr(nd.mem), repr(nd.storage)])


def read_topology(edge_path, node_path) -> NetworkGraph:
    header = {}
    edges, delays = [], {}
    for lineno, line in enumerate(Path(edge_path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                header[key] = val
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TopologyError(f"{edge_path}:{lineno}: expected 'u v delay_ms'")
        u, v = int(parts[0]), int(parts[1])
        u, v = min(u, v), max(u, v)
        edges.append((u, v))
        delays[(u, v)] = float(parts[2])
    nodes = []
    with open(node_path, newline="") as fh:
        for row in csv.DictReader(fh):
            nodes.append(NodeSpec(int(row["id"]), row["layer"], float(row["cpu"]),
                                  float(row["mem"]), float(row["storage"])))
    nodes.sort(key=lambda nd: nd.id)
    if [nd.id for nd in nodes] != list(range(len(nodes))):
        raise TopologyError(f"{node_path}: node ids must be 0..N-1")
    meta = {"bridges": int(header.get("bridges", 0))}
    return NetworkGraph(nodes, sorted(edges), delays, kind=header.get("kind", "BA"),
                        seed=json.loads(header.get("seed", "0")), meta=meta)


def graphs_equal(a: NetworkGraph, b: NetworkGraph) -> bool:
    return a.nodes == b.nodes and a.edges == b.edges and a.delays == b.delays

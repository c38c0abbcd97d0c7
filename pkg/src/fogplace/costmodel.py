"""Delay, cost and balance formulas for a placement.

Units: capacities and demands share one abstract unit system; delays are
milliseconds. ``time_scale`` converts the M/M/1 ``1 / (capacity - rate)``
term into milliseconds (1000 reads capacities as per-second rates).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_TIME_SCALE = 1000.0
DEFAULT_RESERVE = 0.95
METRICS = ("cpu", "mem", "overall")


class StabilityError(ValueError):
    """Arrival rate at or above capacity: the M/M/1 queue has no steady state."""


@dataclass
class LoadState:
    """Per-node assigned load plus the set of services deployed on each node."""

    cpu: np.ndarray
    mem: np.ndarray
    storage: np.ndarray
    hosted: list[set] = field(default_factory=list)

    @classmethod
    def empty(cls, n: int) -> "LoadState":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), [set() for _ in range(n)])

    def copy(self, share_hosted: bool = False) -> "LoadState":
        hosted = self.hosted if share_hosted else [set(h) for h in self.hosted]
        return LoadState(self.cpu.copy(), self.mem.copy(), self.storage.copy(), hosted)

    def add(self, node: int, req) -> None:
        self.cpu[node] += req.cpu
        self.mem[node] += req.mem
        self.storage[node] += req.storage

    def after(self, node: int, req) -> tuple[float, float, float]:
        return (self.cpu[node] + req.cpu, self.mem[node] + req.mem, self.storage[node] + req.storage)


@dataclass(frozen=True)
class CostBreakdown:
    violations: int
    deployment: float
    unhosted: int
    n_requests: int
    total_storage: float

    @property
    def total(self) -> float:
        return local_cost(self.violations, self.deployment, self.unhosted,
                          self.n_requests, self.total_storage)


def processing_time(capacity: float, arrival_rate: float, time_scale: float = DEFAULT_TIME_SCALE) -> float:
    """Mean M/M/1 sojourn time in ms for a host with the given total arrival rate."""
    if arrival_rate >= capacity:
        raise StabilityError(f"arrival rate {arrival_rate} >= capacity {capacity}")
    return time_scale / (capacity - arrival_rate)


def response_time(req, host: int, g, loads: LoadState, time_scale: float = DEFAULT_TIME_SCALE) -> float:
    """Expected response time of ``req`` if placed on ``host``.

    ``loads`` must not yet contain ``req``; its demand is added to the host's
    arrival rate. The device-to-edge LAN hop is ignored, so hosting at the
    ingress node costs processing plus waiting only; any other host adds the
    round trip ``2 * path_delay(ingress, host)``.
    """
    p = processing_time(g.nodes[host].cpu, loads.cpu[host] + req.cpu, time_scale)
    link = 0.0 if host == req.ingress else 2.0 * g.path_delay(req.ingress, host)
    return p + link + req.waiting_ms


def deadline_violation(e: float, tau: float) -> int:
    return 0 if e < tau else 1


def deployment_cost(assignments: Mapping[int, int], requests: Mapping[int, object],
                    hosted: Sequence[set], g) -> float:
    """Bytes downloaded to fog hosts that do not already run the service.

    Cloud placements are free. ``hosted[j]`` is the set of service labels
    deployed on node ``j`` before this placement.
    """
    total = 0.0
    for rid, host in assignments.items():
        if g.nodes[host].is_cloud:
            continue
        req = requests[rid]
        if req.service not in hosted[host]:
            total += req.storage
    return total


def unhosted_cost(assignments: Mapping[int, int], requests: Iterable) -> int:
    return sum(1 for r in requests if r.id not in assignments)


def local_cost(violations: float, deployment: float, unhosted: float,
               n_requests: int, total_storage: float) -> float:
    """Sum of the three cost terms, each scaled to [0, 1] by its plan maximum."""
    if n_requests == 0:
        return 0.0
    dep = deployment / total_storage if total_storage > 0 else 0.0
    return violations / n_requests + dep + unhosted / n_requests


def utilization_vector(loads: LoadState, capacities: np.ndarray) -> np.ndarray:
    """Length-2N vector: CPU ratios for every node, then memory ratios."""
    return np.concatenate([loads.cpu / capacities[:, 0], loads.mem / capacities[:, 1]])


def select_metric(vector: np.ndarray, metric: str = "overall") -> np.ndarray:
    n = vector.shape[-1] // 2
    if metric == "cpu":
        return vector[..., :n]
    if metric == "mem":
        return vector[..., n:]
    if metric == "overall":
        return vector
    raise ValueError(f"unknown variance metric {metric!r}")


def utilization_variance(vector: np.ndarray, metric: str = "overall") -> float:
    """Population variance of utilization ratios taken from a 2N vector."""
    v = select_metric(np.asarray(vector, dtype=float), metric)
    if v.size and np.all(v == v[0]):
        return 0.0  # np.var leaves ~1e-33 when the mean rounds
    return float(np.var(v))


def row_variance(matrix: np.ndarray, metric: str = "overall") -> np.ndarray:
    return np.var(select_metric(matrix, metric), axis=-1)


def check_capacity(load_after: Sequence[float], capacity: Sequence[float],
                   reserve: float = DEFAULT_RESERVE) -> bool:
    """True iff every resource stays strictly below ``reserve * capacity``."""
    return all(l < c * reserve for l, c in zip(load_after, capacity))

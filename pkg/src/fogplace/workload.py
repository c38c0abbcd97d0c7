"""IoT request workloads: per-interval profiles, request batches, ingress placement."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_DURATION_MS = 5 * 60 * 1000.0


class WorkloadError(ValueError):
    pass


@dataclass
class ServiceRequest:
    id: int
    cpu: float
    mem: float
    storage: float
    deadline: float
    arrival_ms: float
    ingress: int = -1
    waiting_ms: float = 0.0
    service: str = ""
    deferrals: int = 0

    @property
    def slack(self) -> float:
        return self.deadline - self.waiting_ms


@dataclass(frozen=True)
class WorkloadProfile:
    index: int
    cpu: float
    mem: float
    storage: float
    count: int
    duration_ms: float = DEFAULT_DURATION_MS

    @property
    def start_ms(self) -> float:
        return self.index * self.duration_ms


@dataclass(frozen=True)
class DeadlineEntry:
    label: str
    low_ms: float
    high_ms: float

    def contains(self, value: float) -> bool:
        return self.low_ms <= value <= self.high_ms


def _fixed(label, ms):
    return DeadlineEntry(label, float(ms), float(ms))


# One row per delay-sensitive service; the augmented-reality row is a range.
DEFAULT_DEADLINES: tuple[DeadlineEntry, ...] = (
    _fixed("big data file download", 100_000),
    _fixed("off-line backup", 100_000),
    _fixed("youtube", 10_000),
    _fixed("home automation", 10_000),
    _fixed("video surveillance", 10_000),
    _fixed("web search", 1_000),
    _fixed("sensor readings", 1_000),
    _fixed("interactive web site", 100),
    _fixed("smart building", 100),
    _fixed("analytics", 100),
    _fixed("broadcast", 50),
    _fixed("web game", 30),
    _fixed("virtual reality", 10),
    _fixed("smart transportation", 10),
    _fixed("finance", 10),
    _fixed("accelerated video", 10),
    _fixed("health care", 5),
    DeadlineEntry("augmented reality", 2.0, 10.0),
    _fixed("haptics", 1),
    _fixed("robotics", 1),
    _fixed("real-time manufacturing", 1),
    _fixed("self-driving", 1),
)


@dataclass(frozen=True)
class SyntheticSource:
    """Seeded profile generator; each aggregate is drawn inside its range.

    Consecutive profiles follow a shared bounded random walk so load rises
    and falls together across resources, similar to 5-minute trace buckets.
    """

    count: int = 26
    seed: int = 0
    cpu_range: tuple[float, float] = (300.0, 500.0)
    mem_range: tuple[float, float] = (340.0, 560.0)
    storage_range: tuple[float, float] = (120.0, 200.0)
    count_range: tuple[int, int] = (1500, 2500)
    duration_ms: float = DEFAULT_DURATION_MS
    step: float = 0.35


def _reflect(x: float) -> float:
    # fold onto [0, 1]; unlike clipping this never pins a run of values to a bound
    x = abs(float(x)) % 2.0
    return 2.0 - x if x > 1.0 else x


def synthetic_profiles(src: SyntheticSource) -> list[WorkloadProfile]:
    if src.count < 1:
        raise WorkloadError("synthetic source must produce at least one profile")
    rng = np.random.default_rng(src.seed)
    level = rng.uniform(0.0, 0.5)
    out = []
    for idx in range(src.count):
        if idx:
            level = _reflect(level + rng.normal(0.0, src.step))
        noise = rng.normal(0.0, 0.05, size=4)
        vals = []
        for (lo, hi), eps in zip((src.cpu_range, src.mem_range, src.storage_range, src.count_range), noise):
            if lo < 0 or hi < lo:
                raise WorkloadError(f"invalid range ({lo}, {hi})")
            vals.append(lo + (hi - lo) * _reflect(level + eps))
        out.append(WorkloadProfile(idx, vals[0], vals[1], vals[2], int(round(vals[3])), src.duration_ms))
    return out


def read_profiles_csv(path, duration_ms: float = DEFAULT_DURATION_MS) -> list[WorkloadProfile]:
    path = Path(path)
    if not path.exists():
        raise WorkloadError(f"profile file {path} not found")
    profiles = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or ())
        count_col = "count" if "count" in fields else "request_count"
        missing = {"cpu", "mem", "storage", count_col} - fields
        if missing:
            raise WorkloadError(f"{path}:1: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                cpu, mem, sto = float(row["cpu"]), float(row["mem"]), float(row["storage"])
                cnt = int(row[count_col])
            except (TypeError, ValueError) as exc:
                raise WorkloadError(f"{path}:{lineno}: malformed row ({exc})") from None
            if min(cpu, mem, sto) < 0 or cnt < 0:
                raise WorkloadError(f"{path}:{lineno}: negative aggregate")
            profiles.append(WorkloadProfile(len(profiles), cpu, mem, sto, cnt, duration_ms))
    if not profiles:
        raise WorkloadError(f"{path}: no profiles")
    return profiles


def load_profiles(source) -> list[WorkloadProfile]:
    """Profiles from a :class:`SyntheticSource` or a CSV path."""
    if isinstance(source, SyntheticSource):
        return synthetic_profiles(source)
    return read_profiles_csv(source)


def write_profiles_csv(profiles: Sequence[WorkloadProfile], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cpu", "mem", "storage", "count"])
        for p in profiles:
            w.writerow([repr(float(p.cpu)), repr(float(p.mem)), repr(float(p.storage)), int(p.count)])


def profile_seed(run_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([run_seed, index])


def materialize_requests(profile: WorkloadProfile, deadline_table: Sequence[DeadlineEntry] = DEFAULT_DEADLINES,
                         seed=0, *, id_offset: int = 0,
                         proportions: Sequence[float] | None = None) -> list[ServiceRequest]:
    """Split a profile's aggregates into ``profile.count`` requests.

    Demands come from a symmetric Dirichlet(1) partition per resource, so
    they are positive and sum to the aggregate. Deadlines are drawn from
    ``deadline_table`` (uniform unless ``proportions`` is given).
    """
    if not deadline_table:
        raise WorkloadError("deadline table is empty")
    n = profile.count
    if n == 0:
        return []
    if min(profile.cpu, profile.mem, profile.storage) <= 0:
        raise WorkloadError(f"profile {profile.index}: {n} requests but a zero aggregate")
    if proportions is not None:
        proportions = np.asarray(proportions, dtype=float)
        proportions = proportions / proportions.sum()
    rng = np.random.default_rng(seed)
    ones = np.ones(n)
    cpu = rng.dirichlet(ones) * profile.cpu
    mem = rng.dirichlet(ones) * profile.mem
    sto = rng.dirichlet(ones) * profile.storage
    rows = rng.choice(len(deadline_table), size=n, p=proportions)
    spread = rng.random(n)
    arrival = profile.start_ms + rng.random(n) * profile.duration_ms

    out = []
    for i in range(n):
        entry = deadline_table[rows[i]]
        deadline = entry.low_ms + (entry.high_ms - entry.low_ms) * spread[i]
        out.append(ServiceRequest(id=id_offset + i, cpu=float(cpu[i]), mem=float(mem[i]),
                                  storage=float(sto[i]), deadline=float(deadline),
                                  arrival_ms=float(arrival[i]), service=entry.label))
    return out


def distribute_to_ingress(requests: Sequence[ServiceRequest], g, mode: str = "Rand",
                          seed=0) -> list[ServiceRequest]:
    """Assign each request an ingress fog node (uniform or Beta(2, 5) over node index)."""
    fog = g.fog_ids
    if not fog:
        raise WorkloadError("network has no fog nodes")
    rng = np.random.default_rng(seed)
    n = len(requests)
    mode = mode.lower()
    if mode == "rand":
        idx = rng.integers(len(fog), size=n)
    elif mode == "beta":
        idx = np.clip(np.floor(rng.beta(2.0, 5.0, size=n) * len(fog)).astype(int), 0, len(fog) - 1)
    else:
        raise WorkloadError(f"unknown distribution mode {mode!r}")
    return [replace(r, ingress=fog[int(k)]) for r, k in zip(requests, idx)]


def write_requests_csv(requests: Sequence[ServiceRequest], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "arrival_ms", "cpu", "mem", "storage", "deadline_ms", "ingress"])
        for r in requests:
            w.writerow([r.id, repr(r.arrival_ms), repr(r.cpu), repr(r.mem), repr(r.storage),
                        repr(r.deadline), r.ingress])

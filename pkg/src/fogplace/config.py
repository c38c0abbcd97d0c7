"""Run configuration: a flat dataclass, INI/JSON loading and ``key=value`` overrides.

INI files group keys into sections purely for readability; every key is
unique across sections, so ``--set n=400`` and ``--set topology.n=400``
are the same override. Values are parsed as JSON literals when possible
(``[0, 1]``, ``0.5``, ``true``), otherwise kept as strings.
"""
from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .topology import DEFAULT_CLOUD_TOTAL, DEFAULT_FOG_TOTAL, KINDS

STRATEGIES = ("epos", "first_fit", "cloud")
DISTRIBUTIONS = ("Rand", "Beta")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # topology
    topology: str = "BA"
    n: int = 200
    cloud_count: int = 1
    ba_m: int = 2
    ws_k: int = 4
    ws_beta: float = 0.1
    er_p: float = 0.03
    delay_min: float = 1.0
    delay_max: float = 10.0
    wan_delay: float = 50.0
    # capacity
    fog_capacity: tuple = DEFAULT_FOG_TOTAL
    cloud_capacity: tuple = DEFAULT_CLOUD_TOTAL
    capacity_mode: str = "uniform"
    reserve: float = 0.95
    time_scale: float = 1000.0
    # workload
    workload: str = "synthetic"          # or a path to a profile CSV
    profile_count: int = 26
    profiles: tuple = (0, 1, 2, 3, 4)
    distribution: str = "Rand"
    duration_ms: float = 300000.0
    max_deferrals: int = 3
    # strategy
    strategy: str = "epos"
    hops: float = math.inf
    lam: float = 0.0
    plan_count: int = 20
    iterations: int = 40
    fanout: int = 2
    reorganizations: int = -1          # -1: rebuild the tree until iterations run out
    metric: str = "overall"
    retry_next_host: bool = False
    first_fit_self: bool = True
    # run
    seed: int = 0
    export_plans: bool = False

    def validate(self) -> "RunConfig":
        problems = []
        if self.topology not in KINDS:
            problems.append(f"topology must be one of {KINDS}")
        if self.n < 2 or self.cloud_count < 1 or self.cloud_count >= self.n:
            problems.append("need n >= 2 and 1 <= cloud_count < n")
        if self.strategy not in STRATEGIES:
            problems.append(f"strategy must be one of {STRATEGIES}")
        if self.distribution not in DISTRIBUTIONS:
            problems.append(f"distribution must be one of {DISTRIBUTIONS}")
        if not 0.0 <= self.lam <= 1.0:
            problems.append("lam must lie in [0, 1]")
        if not (self.hops >= 1):
            problems.append("hops must be >= 1 or inf")
        if self.plan_count < 1 or self.iterations < 0 or self.fanout < 1 or self.reorganizations < -1:
            problems.append("plan_count, fanout >= 1; iterations >= 0; reorganizations >= -1")
        if not 0.0 < self.reserve <= 1.0:
            problems.append("reserve must lie in (0, 1]")
        if self.time_scale <= 0 or self.duration_ms <= 0:
            problems.append("time_scale and duration_ms must be positive")
        if not 0 < self.delay_min <= self.delay_max or self.wan_delay <= 0:
            problems.append("link delays must be positive with delay_min <= delay_max")
        for name in ("fog_capacity", "cloud_capacity"):
            v = getattr(self, name)
            if len(v) != 3 or min(v) <= 0:
                problems.append(f"{name} must be three positive numbers")
        if self.capacity_mode not in ("uniform", "heterogeneous"):
            problems.append("capacity_mode must be uniform or heterogeneous")
        if self.metric not in ("cpu", "mem", "overall"):
            problems.append("metric must be cpu, mem or overall")
        if not self.profiles or min(self.profiles) < 0:
            problems.append("profiles must be a non-empty list of indices")
        elif self.workload == "synthetic" and max(self.profiles) >= self.profile_count:
            problems.append("profile index beyond profile_count")
        if self.max_deferrals < 0:
            problems.append("max_deferrals must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def topology_params(self) -> dict:
        return {"BA": {"m": self.ba_m}, "WS": {"k": self.ws_k, "beta": self.ws_beta},
                "ER": {"p": self.er_p}}[self.topology]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hops"] = "inf" if math.isinf(self.hops) else int(self.hops)
        d["fog_capacity"] = list(self.fog_capacity)
        d["cloud_capacity"] = list(self.cloud_capacity)
        d["profiles"] = list(self.profiles)
        return d


@dataclass(frozen=True)
class GridSpec:
    """Cross-product of run settings; any axis left empty keeps the base value."""

    strategies: tuple = STRATEGIES
    topologies: tuple = KINDS
    sizes: tuple = (200, 400)
    hops: tuple = (1, 3, math.inf)
    distributions: tuple = DISTRIBUTIONS
    lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    seeds: tuple = (0,)

    def validate(self) -> "GridSpec":
        if not self.strategies:
            raise ConfigError("grid has an empty strategy list")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ConfigError(f"unknown strategies {sorted(bad)}")
        for name in ("topologies", "sizes", "hops", "distributions", "lambdas", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"grid axis {name} is empty")
        return self


SECTIONS = {
    "topology": ("topology", "n", "cloud_count", "ba_m", "ws_k", "ws_beta", "er_p",
                 "delay_min", "delay_max", "wan_delay"),
    "capacity": ("fog_capacity", "cloud_capacity", "capacity_mode", "reserve", "time_scale"),
    "workload": ("workload", "profile_count", "profiles", "distribution", "duration_ms",
                 "max_deferrals"),
    "strategy": ("strategy", "hops", "lam", "plan_count", "iterations", "fanout",
                 "reorganizations", "metric", "retry_next_host", "first_fit_self"),
    "run": ("seed", "export_plans"),
    "grid": tuple(f.name for f in fields(GridSpec)),
}
_RUN_FIELDS = {f.name: f for f in fields(RunConfig)}
_GRID_FIELDS = {f.name: f for f in fields(GridSpec)}


def parse_value(text: str):
    text = text.strip()
    if text.lower() in ("inf", "infinity", "unlimited", "∞"):
        return math.inf
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(name: str, value, default):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "yes", "1")
            return bool(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                value = [value]
            return tuple(parse_value(v) if isinstance(v, str) and name in ("hops", "lambdas", "sizes", "seeds") else v
                         for v in value)
        if name == "hops":
            return float(parse_value(value) if isinstance(value, str) else value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def _split_key(key: str) -> str:
    section, _, name = key.rpartition(".")
    if name not in _RUN_FIELDS and name not in _GRID_FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if section and name not in SECTIONS.get(section, ()):
        raise ConfigError(f"key {name!r} does not belong to section [{section}]")
    return name


def read_config_file(path) -> dict:
    """Raw ``{key: value}`` mapping from an INI or JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    raw: dict = {}
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for key, value in data.items():
            if isinstance(value, dict):
                for k, v in value.items():
                    raw[_split_key(f"{key}.{k}")] = v
            else:
                raw[_split_key(key)] = value
        return raw
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        for k, v in cp.items(section):
            raw[_split_key(f"{section}.{k}")] = parse_value(v)
    return raw


def parse_overrides(pairs) -> dict:
    raw = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not key=value")
        raw[_split_key(key.strip())] = parse_value(value)
    return raw


def build_config(raw: dict, base: RunConfig | None = None) -> tuple[RunConfig, GridSpec]:
    base = base or RunConfig()
    run_kw, grid_kw = {}, {}
    for name, value in raw.items():
        if name in _GRID_FIELDS:
            grid_kw[name] = _coerce(name, value, _GRID_FIELDS[name].default)
        else:
            run_kw[name] = _coerce(name, value, getattr(base, name))
    cfg = replace(base, **run_kw).validate()
    return cfg, GridSpec(**grid_kw)


def load_config(path=None, overrides=(), seed: int | None = None) -> tuple[RunConfig, GridSpec]:
    raw = read_config_file(path) if path else {}
    raw.update(parse_overrides(overrides))
    if seed is not None:
        raw["seed"] = seed
    return build_config(raw)


def write_config(cfg: RunConfig, path) -> None:
    d = cfg.to_dict()
    cp = configparser.ConfigParser(interpolation=None)
    for section, keys in SECTIONS.items():
        if section == "grid":
            continue
        cp[section] = {k: json.dumps(d[k]) if not isinstance(d[k], str) else d[k] for k in keys}
    with open(path, "w") as fh:
        cp.write(fh)

"""Experiment configuration: TOML ingestion with strict validation.

Configs are a single TOML file: top-level keys plus nested tables per
concern. Parsing is strict: unknown keys or tables are errors, and every
reported problem names the offending field.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from ..errors import ConfigError

KINDS = (
    "single_step_schedule",
    "multi_step_kalman",
    "curvature_study",
    "theorem2_study",
    "network_balance",
    "theorem1_verify",
    "speedup",
)

METHOD_NAMES = (
    "brute_force_optimal",
    "classic_greedy",
    "randomized_greedy",
    "random_uniform",
)

A_KINDS = ("gaussian", "sphere", "explicit")


@dataclass(frozen=True)
class ModelSpec:
    m: int = 4
    n: int = 8
    sigma: float = 1.0
    sigma_x: float = 1.0  # Sigma_x = sigma_x * I
    a_kind: str = "gaussian"
    sigma_h: float = 1.0
    a_matrix: tuple | None = None
    h_scale: float = 1.0  # H_t = h_scale * I


@dataclass(frozen=True)
class ScheduleSpec:
    k: int = 3
    epsilons: tuple[float, ...] = ()
    methods: tuple[str, ...] = ("classic_greedy",)
    horizon: int = 10
    instances: int = 20


@dataclass(frozen=True)
class CurvatureSpec:
    samples: int = 2000
    cap: int = 10
    instances: int = 5


@dataclass(frozen=True)
class BoundSpec:
    sigma_h: float = 0.5
    C: float = 1.0
    q: float = 3.0


@dataclass(frozen=True)
class SpeedupSpec:
    n: int = 200
    k: int = 20
    m: int = 200
    epsilons: tuple[float, ...] = (0.1,)
    repeats: int = 3


@dataclass(frozen=True)
class NetworkSpec:
    nodes: int = 3
    state_dim: int = 50
    a_scale: float = 0.8
    q_scale: float = 0.2
    r_scale: float = 0.05
    ranks: tuple[int, ...] = (21, 37, 5)
    budgets: tuple[int, ...] = (40,)
    gammas: tuple[float, ...] = (0.0, 200.0)
    horizon: int = 20
    runs: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    id: str
    seed: int = 1234
    trials: int = 100
    out_dir: str | None = None
    model: ModelSpec = field(default_factory=ModelSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    curvature: CurvatureSpec = field(default_factory=CurvatureSpec)
    bound: BoundSpec = field(default_factory=BoundSpec)
    speedup: SpeedupSpec = field(default_factory=SpeedupSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)


_TOP_KEYS = {"kind", "id", "seed", "trials", "out_dir"}
_SECTION_FIELDS = {
    "model": set(ModelSpec.__dataclass_fields__),
    "schedule": set(ScheduleSpec.__dataclass_fields__),
    "curvature": set(CurvatureSpec.__dataclass_fields__),
    "bound": set(BoundSpec.__dataclass_fields__),
    "speedup": set(SpeedupSpec.__dataclass_fields__),
    "network": set(NetworkSpec.__dataclass_fields__),
}
_REQUIRED_SECTIONS = {
    "single_step_schedule": ("model", "schedule"),
    "multi_step_kalman": ("model", "schedule"),
    "curvature_study": ("model", "curvature"),
    "theorem2_study": ("model", "bound"),
    "network_balance": ("network",),
    "theorem1_verify": ("model", "schedule"),
    "speedup": ("speedup",),
}


def _need(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def _typed(section: str, data: dict, key: str, kinds, default):
    if key not in data:
        return default
    value = data.pop(key)
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kinds is int and isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: expected int, got bool")
    if not isinstance(value, kinds):
        want = kinds.__name__ if isinstance(kinds, type) else "/".join(k.__name__ for k in kinds)
        raise ConfigError(f"{section}.{key}: expected {want}, got {type(value).__name__}")
    return value


def _num_list(section: str, data: dict, key: str, default, *, as_int=False):
    if key not in data:
        return default
    raw = data.pop(key)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{section}.{key}: expected a non-empty list")
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{section}.{key}[{i}]: expected a number")
        if as_int and not isinstance(v, int):
            raise ConfigError(f"{section}.{key}[{i}]: expected an integer")
        out.append(int(v) if as_int else float(v))
    return tuple(out)


def _check_unknown(section: str, data: dict) -> None:
    if data:
        unknown = ", ".join(sorted(data))
        raise ConfigError(f"unknown key(s) in [{section}]: {unknown}")


def _parse_model(data: dict) -> ModelSpec:
    m = _typed("model", data, "m", int, 4)
    n = _typed("model", data, "n", int, 8)
    sigma = _typed("model", data, "sigma", float, 1.0)
    sigma_x = _typed("model", data, "sigma_x", float, 1.0)
    a_kind = _typed("model", data, "a_kind", str, "gaussian")
    sigma_h = _typed("model", data, "sigma_h", float, 1.0)
    h_scale = _typed("model", data, "h_scale", float, 1.0)
    a_matrix = None
    if "a_matrix" in data:
        raw = data.pop("a_matrix")
        if not isinstance(raw, list):
            raise ConfigError("model.a_matrix: expected a list of rows")
        a_matrix = tuple(tuple(float(x) for x in row) for row in raw)
    _check_unknown("model", data)
    _need(m >= 1, "model.m", "must be >= 1")
    _need(n >= 1, "model.n", "must be >= 1")
    _need(sigma > 0, "model.sigma", "must be > 0")
    _need(sigma_x > 0, "model.sigma_x", "must be > 0")
    _need(a_kind in A_KINDS, "model.a_kind", f"must be one of {A_KINDS}")
    _need(sigma_h >= 0, "model.sigma_h", "must be >= 0")
    if a_kind == "explicit":
        _need(a_matrix is not None, "model.a_matrix", "required when a_kind = 'explicit'")
        _need(
            len(a_matrix) == n and all(len(r) == m for r in a_matrix),
            "model.a_matrix",
            f"must be {n} rows of length {m}",
        )
    return ModelSpec(m, n, sigma, sigma_x, a_kind, sigma_h, a_matrix, h_scale)


def _parse_schedule(data: dict) -> ScheduleSpec:
    k = _typed("schedule", data, "k", int, 3)
    epsilons = _num_list("schedule", data, "epsilons", ())
    methods = data.pop("methods", ["classic_greedy"])
    horizon = _typed("schedule", data, "horizon", int, 10)
    instances = _typed("schedule", data, "instances", int, 20)
    _check_unknown("schedule", data)
    _need(k >= 1, "schedule.k", "must be >= 1")
    if not isinstance(methods, list) or not methods:
        raise ConfigError("schedule.methods: expected a non-empty list")
    for name in methods:
        _need(name in METHOD_NAMES, "schedule.methods", f"unknown method '{name}'")
    lo = math.exp(-k)
    for i, eps in enumerate(epsilons):
        _need(
            lo <= eps < 1.0,
            f"schedule.epsilons[{i}]",
            f"must lie in [exp(-k), 1) = [{lo:.4g}, 1), got {eps}",
        )
    _need(horizon >= 1, "schedule.horizon", "must be >= 1")
    _need(instances >= 1, "schedule.instances", "must be >= 1")
    return ScheduleSpec(k, epsilons, tuple(methods), horizon, instances)


def _parse_curvature(data: dict) -> CurvatureSpec:
    samples = _typed("curvature", data, "samples", int, 2000)
    cap = _typed("curvature", data, "cap", int, 10)
    instances = _typed("curvature", data, "instances", int, 5)
    _check_unknown("curvature", data)
    _need(samples >= 1, "curvature.samples", "must be >= 1")
    _need(cap >= 2, "curvature.cap", "must be >= 2")
    _need(instances >= 1, "curvature.instances", "must be >= 1")
    return CurvatureSpec(samples, cap, instances)


def _parse_bound(data: dict) -> BoundSpec:
    sigma_h = _typed("bound", data, "sigma_h", float, 0.5)
    C = _typed("bound", data, "C", float, 1.0)
    q = _typed("bound", data, "q", float, 3.0)
    _check_unknown("bound", data)
    _need(sigma_h >= 0, "bound.sigma_h", "must be >= 0")
    _need(C > 0, "bound.C", "must be > 0")
    _need(q > 0, "bound.q", "must be > 0")
    return BoundSpec(sigma_h, C, q)


def _parse_speedup(data: dict) -> SpeedupSpec:
    n = _typed("speedup", data, "n", int, 200)
    k = _typed("speedup", data, "k", int, 20)
    m = _typed("speedup", data, "m", int, 30)
    epsilons = _num_list("speedup", data, "epsilons", (0.1,))
    repeats = _typed("speedup", data, "repeats", int, 3)
    _check_unknown("speedup", data)
    _need(1 <= k <= n, "speedup.k", "must satisfy 1 <= k <= n")
    _need(m >= 1, "speedup.m", "must be >= 1")
    _need(repeats >= 1, "speedup.repeats", "must be >= 1")
    lo = math.exp(-k)
    for i, eps in enumerate(epsilons):
        _need(
            lo <= eps < 1.0,
            f"speedup.epsilons[{i}]",
            f"must lie in [exp(-k), 1), got {eps}",
        )
    return SpeedupSpec(n, k, m, epsilons, repeats)


def _parse_network(data: dict) -> NetworkSpec:
    nodes = _typed("network", data, "nodes", int, 3)
    state_dim = _typed("network", data, "state_dim", int, 50)
    a_scale = _typed("network", data, "a_scale", float, 0.8)
    q_scale = _typed("network", data, "q_scale", float, 0.2)
    r_scale = _typed("network", data, "r_scale", float, 0.05)
    ranks = _num_list("network", data, "ranks", (21, 37, 5), as_int=True)
    budgets = _num_list("network", data, "budgets", (40,), as_int=True)
    gammas = _num_list("network", data, "gammas", (0.0, 200.0))
    horizon = _typed("network", data, "horizon", int, 20)
    runs = _typed("network", data, "runs", int, 10)
    _check_unknown("network", data)
    _need(nodes >= 2, "network.nodes", "must be >= 2")
    _need(state_dim >= 1, "network.state_dim", "must be >= 1")
    _need(q_scale > 0, "network.q_scale", "must be > 0")
    _need(r_scale > 0, "network.r_scale", "must be > 0")
    _need(len(ranks) == nodes, "network.ranks", f"must list one rank per node ({nodes})")
    for i, r in enumerate(ranks):
        _need(1 <= r <= state_dim, f"network.ranks[{i}]", "must lie in [1, state_dim]")
    for i, K in enumerate(budgets):
        _need(K >= 1, f"network.budgets[{i}]", "must be >= 1")
    for i, g in enumerate(gammas):
        _need(g >= 0, f"network.gammas[{i}]", "must be >= 0")
    _need(horizon >= 1, "network.horizon", "must be >= 1")
    _need(runs >= 1, "network.runs", "must be >= 1")
    return NetworkSpec(
        nodes, state_dim, a_scale, q_scale, r_scale, ranks, budgets, gammas, horizon, runs
    )


_PARSERS = {
    "model": _parse_model,
    "schedule": _parse_schedule,
    "curvature": _parse_curvature,
    "bound": _parse_bound,
    "speedup": _parse_speedup,
    "network": _parse_network,
}


def parse_config(data: dict, name: str = "config") -> ExperimentConfig:
    """Validate a parsed TOML mapping into an ExperimentConfig."""
    data = dict(data)
    kind = data.pop("kind", None)
    _need(kind is not None, "kind", "is required")
    _need(kind in KINDS, "kind", f"must be one of {KINDS}, got '{kind}'")
    exp_id = data.pop("id", name)
    if not isinstance(exp_id, str):
        raise ConfigError("id: expected a string")
    seed = _typed("config", {"seed": data.pop("seed", 1234)}, "seed", int, 1234)
    trials = _typed("config", {"trials": data.pop("trials", 100)}, "trials", int, 100)
    _need(trials >= 1, "trials", "must be >= 1")
    out_dir = data.pop("out_dir", None)
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir: expected a string")

    sections: dict = {}
    for section, parser in _PARSERS.items():
        if section in data:
            raw = data.pop(section)
            if not isinstance(raw, dict):
                raise ConfigError(f"[{section}] must be a table")
            sections[section] = parser(dict(raw))
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    for section in _REQUIRED_SECTIONS[kind]:
        _need(section in sections, f"[{section}]", f"section required for kind '{kind}'")

    cfg = ExperimentConfig(kind=kind, id=exp_id, seed=seed, trials=trials, out_dir=out_dir, **sections)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ExperimentConfig) -> None:
    if cfg.kind in ("single_step_schedule", "multi_step_kalman", "theorem1_verify"):
        _need(
            cfg.schedule.k <= cfg.model.n,
            "schedule.k",
            f"budget {cfg.schedule.k} exceeds sensor count n={cfg.model.n}",
        )
        if "randomized_greedy" in cfg.schedule.methods or cfg.kind == "theorem1_verify":
            _need(
                len(cfg.schedule.epsilons) > 0,
                "schedule.epsilons",
                "required when randomized_greedy is used",
            )
    if cfg.kind == "theorem1_verify":
        _need(
            cfg.model.n <= 12,
            "model.n",
            "exact curvature + brute force verification caps n at 12",
        )
    if cfg.kind == "theorem2_study":
        _need(
            cfg.bound.C >= cfg.model.m * cfg.bound.sigma_h**2 - 1e-12,
            "bound.C",
            "must be >= m * sigma_h^2 (trace consistency)",
        )
        _need(
            cfg.model.n <= 10,
            "model.n",
            "exact curvature inside the bound check caps n at 10",
        )


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    return parse_config(data, name=path.stem)

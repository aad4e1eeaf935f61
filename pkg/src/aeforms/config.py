"""Run configuration: flat ``key = value`` files with dotted keys.

Example::

    tasks = check-metric, spectrum, dos
    seed = 7
    metric.family = conformal-gaussian
    metric.amplitude = 0.1
    metric.k_decay = 3
    grid.n = 2
    grid.half_width = 8
    grid.points = 65
    scatter.grid.n = 1

A task reads ``<task>.grid.*`` first and falls back to ``grid.*``; likewise
``<task>.seed`` falls back to ``seed``.  Lines starting with ``#`` or ``;``
are comments.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .metric_models import DEFAULT_RADII, FAMILIES, MetricSpec

TASKS = ("check-metric", "spectrum", "dos", "scatter", "forms", "tracecheck")
TASK_ORDER = {t: i for i, t in enumerate(TASKS)}
STOCHASTIC_TASKS = ("spectrum", "dos", "forms", "tracecheck", "check-metric")
GRID_TASKS = ("check-metric", "spectrum", "dos", "scatter", "forms")
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _tasks(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


# key -> (parser, default); a default of None means "absent unless given"
_GLOBAL_SCHEMA = {
    "tasks": (_tasks, []),
    "seed": (_seed, None),
    "metric.family": (str, None),
    "metric.amplitude": (float, 0.1),
    "metric.decay": (float, 4.0),
    "metric.amplitudes": (_floats, None),
    "metric.k_decay": (float, 3.0),
    "grid.n": (int, 2),
    "grid.half_width": (float, 8.0),
    "grid.points": (int, 65),
    "check-metric.radii": (_floats, list(DEFAULT_RADII)),
    "check-metric.band_samples": (int, 10_000),
    "spectrum.count": (int, 6),
    "spectrum.tol": (float, 1e-8),
    "spectrum.rtol": (float, 0.2),
    "dos.interval": (_floats, [0.0, 4.0]),
    "dos.bins": (int, 20),
    "dos.probes": (int, 32),
    "dos.moments": (int, 200),
    "dos.threshold": (float, 0.05),
    "scatter.center": (_floats, None),
    "scatter.momentum": (_floats, None),
    "scatter.width": (float, None),
    "scatter.polarization": (_floats, None),
    "scatter.times": (_floats, None),
    "scatter.tol": (float, 1e-10),
    "scatter.mirrored": (_bool, True),
    "forms.n_centers": (int, 5),
    "tracecheck.interval": (_floats, [0.2, 1.0]),
    "tracecheck.points": (_ints, [512, 768]),
    "tracecheck.half_width": (float, 100.0),
    "tracecheck.n": (int, 1),
    "tracecheck.rank": (int, 20),
    "tracecheck.margin": (float, 0.1),
    "tracecheck.tol": (float, 1e-10),
    "output.dir": (str, None),
    "output.dump_operators": (_bool, False),
}
for _t in GRID_TASKS:
    _GLOBAL_SCHEMA[f"{_t}.grid.n"] = (int, None)
    _GLOBAL_SCHEMA[f"{_t}.grid.half_width"] = (float, None)
    _GLOBAL_SCHEMA[f"{_t}.grid.points"] = (int, None)
for _t in STOCHASTIC_TASKS:
    _GLOBAL_SCHEMA[f"{_t}.seed"] = (_seed, None)
SCHEMA = dict(_GLOBAL_SCHEMA)


@dataclass(frozen=True)
class TaskGrid:
    n: int
    half_width: float
    points: int


@dataclass
class RunConfig:
    values: dict
    raw: dict = field(default_factory=dict)  # key -> original text, for hashing

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    @property
    def tasks(self) -> list[str]:
        return sorted(self["tasks"], key=TASK_ORDER.__getitem__)

    def task_grid(self, task: str) -> TaskGrid:
        def pick(name):
            v = self.values.get(f"{task}.grid.{name}")
            return self[f"grid.{name}"] if v is None else v

        return TaskGrid(n=pick("n"), half_width=pick("half_width"), points=pick("points"))

    def task_dim(self, task: str) -> int:
        if task == "tracecheck":
            return self["tracecheck.n"]
        return self.task_grid(task).n

    def task_seed(self, task: str) -> int:
        v = self.values.get(f"{task}.seed")
        return self["seed"] if v is None else v

    def metric_spec(self, dim: int) -> MetricSpec:
        amps = self["metric.amplitudes"]
        return MetricSpec(
            family=self["metric.family"],
            amplitude=self["metric.amplitude"],
            decay=self["metric.decay"],
            dim=dim,
            amplitudes=None if amps is None else tuple(amps[:dim]),
        )

    def canonical_text(self) -> str:
        """Every explicitly set key with its parsed value, sorted; the hash input."""
        return "".join(f"{k} = {self.values[k]!r}\n" for k in sorted(self.values))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def with_overrides(self, **kv) -> "RunConfig":
        vals = dict(self.values)
        vals.update({k: v for k, v in kv.items() if v is not None})
        cfg = RunConfig(values=vals, raw=dict(self.raw))
        validate(cfg)
        return cfg


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=None, interpolation=None
    )
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    raw = dict(parser["run"])
    violations = []
    values = {}
    for key, txt in raw.items():
        if key not in SCHEMA:
            violations.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = SCHEMA[key][0](txt)
        except ValueError as exc:
            violations.append(f"{key}: cannot parse {txt!r} ({exc})")
    if violations:
        raise ConfigError(violations)
    cfg = RunConfig(values=values, raw=raw)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return parse_config_text(text)


def _check_interval(cfg, key, out):
    iv = cfg[key]
    if len(iv) != 2 or not iv[1] > iv[0]:
        out.append(f"{key} must be two increasing numbers, got {iv}")


def validate(cfg: RunConfig) -> None:
    """Check every parameter of every requested task; raise one error listing all violations."""
    v: list[str] = []
    tasks = cfg["tasks"]
    for t in tasks:
        if t not in TASKS:
            v.append(f"unknown task {t!r}; choose from {', '.join(TASKS)}")
    if len(set(tasks)) != len(tasks):
        v.append("tasks must not repeat")
    tasks = [t for t in tasks if t in TASKS]
    fam = cfg["metric.family"]
    if tasks and fam is None:
        v.append("metric.family is required")
    elif fam is not None and fam not in FAMILIES:
        v.append(f"metric.family {fam!r} unknown; choose from {', '.join(FAMILIES)}")
    for t in tasks:
        if t in STOCHASTIC_TASKS and cfg.task_seed(t) is None:
            v.append(f"task {t!r} is stochastic and needs a seed (seed or {t}.seed)")
        dim = cfg.task_dim(t)
        if dim < 1:
            v.append(f"{t}: dimension must be >= 1")
            continue
        if not cfg["metric.k_decay"] > dim:
            v.append(
                f"{t}: metric.k_decay={cfg['metric.k_decay']:g} violates the decay hypothesis k > n (n={dim})"
            )
        if fam in FAMILIES:
            try:
                cfg.metric_spec(dim)
            except ValueError as exc:
                v.append(f"{t}: {exc}")
        if t in GRID_TASKS:
            g = cfg.task_grid(t)
            if g.points < 3:
                v.append(f"{t}: grid points must be >= 3")
            if not g.half_width > 0:
                v.append(f"{t}: grid half width must be positive")
    if "spectrum" in tasks:
        if cfg["spectrum.count"] < 1:
            v.append("spectrum.count must be >= 1")
        if not cfg["spectrum.tol"] > 0:
            v.append("spectrum.tol must be positive")
    if "dos" in tasks:
        _check_interval(cfg, "dos.interval", v)
        if cfg["dos.probes"] < 8:
            v.append("dos.probes must be >= 8")
        if cfg["dos.bins"] < 1 or cfg["dos.moments"] < 2:
            v.append("dos.bins must be >= 1 and dos.moments >= 2")
        g = cfg.task_grid("dos")
        if len(cfg["dos.interval"]) == 2 and g.points >= 3 and g.half_width > 0:
            h = 2 * g.half_width / (g.points - 1)
            top = 4 * g.n / h**2
            lo, hi = cfg["dos.interval"]
            if lo < 0 or hi > top:
                v.append(f"dos.interval must lie within [0, 4n/h^2] = [0, {top:.6g}]")
    if "scatter" in tasks:
        dim = cfg.task_dim("scatter")
        for key in ("scatter.center", "scatter.momentum", "scatter.times"):
            if cfg[key] is None:
                v.append(f"{key} is required for the scatter task")
        if cfg["scatter.width"] is None or not (cfg["scatter.width"] or 0) > 0:
            v.append("scatter.width must be given and positive")
        for key in ("scatter.center", "scatter.momentum", "scatter.polarization"):
            if cfg[key] is not None and len(cfg[key]) != dim:
                v.append(f"{key} must have {dim} entries")
        times = cfg["scatter.times"]
        if times is not None:
            if len(times) < 3 or any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
                v.append("scatter.times must be >= 3 non-negative strictly increasing values")
        if cfg["scatter.center"] is not None and cfg["scatter.width"]:
            L = cfg.task_grid("scatter").half_width
            reach = max(abs(c) for c in cfg["scatter.center"]) + 6 * cfg["scatter.width"]
            if reach > L:
                v.append(f"scatter packet violates the six-width support margin ({reach:g} > L={L:g})")
        if not cfg["scatter.tol"] > 0:
            v.append("scatter.tol must be positive")
    if "forms" in tasks and cfg["forms.n_centers"] < 1:
        v.append("forms.n_centers must be >= 1")
    if "tracecheck" in tasks:
        _check_interval(cfg, "tracecheck.interval", v)
        if len(cfg["tracecheck.points"]) != 2 or any(p < 3 for p in cfg["tracecheck.points"]):
            v.append("tracecheck.points must be two grid sizes >= 3")
        if not 1 <= cfg["tracecheck.rank"] <= 64:
            v.append("tracecheck.rank must lie in [1, 64]")
        if not cfg["tracecheck.margin"] > 0 or not cfg["tracecheck.half_width"] > 0:
            v.append("tracecheck.margin and tracecheck.half_width must be positive")
    if "check-metric" in tasks:
        radii = cfg["check-metric.radii"]
        if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0 or radii[-1] < 4 * radii[0]:
            v.append("check-metric.radii must be >= 3 increasing positive values spanning a factor of 4")
    if v:
        raise ConfigError(v)

"""Run configuration: strict JSON schema, environment and flag overrides.

Precedence is file < environment (``BITRESET_<KEY>``) < command-line flags.
Every key is validated before any computation starts; unknown keys are
rejected with their dotted path.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

ENV_PREFIX = "BITRESET_"

EXPERIMENTS = (
    "single-run",
    "fixed-energy-sweep",
    "fixed-error-sweep",
    "region-map",
    "continuum-reset",
    "throughput",
)

CONTINUUM_KEYS = {
    "k": 1.0,
    "a0": 4.0,
    "a1": -1.0,
    "f1": 2.0,
    "D": 1.0,
    "M": 512,
    "taus": [1.0, 4.0, 16.0],
    "dt": None,
    "idle": False,
    "snapshots": [],
}
THROUGHPUT_KEYS = {"n": 1.0, "tau_sw": 1.0, "T": 1.0, "eps": 0.25}
REGION_KEYS = {"n_E": 64, "n_eps": 64, "E_min": 0.1, "E_max": 20.0, "eps_min": 1e-4}


@dataclass
class RunConfig:
    """Validated configuration for one CLI invocation.

    ``tau_grid`` is either a list of durations or ``{"min", "max", "num"}``
    for a log-spaced grid.  ``tau_cap`` is the longest duration considered by
    the region map.
    """

    experiment: str = "single-run"
    out: str = "out"
    seed: int = 0
    workers: int = None
    N: int = 100
    mu: float = 0.1
    beta: float = 1.0
    E_max: float = 10.0
    tau: float = 100.0
    eps_target: float = 0.25
    E_cap: float = None
    tau_grid: object = field(default_factory=lambda: {"min": 0.1, "max": 1000.0, "num": 60})
    tau_cap: float = 5e4
    p0: list = None
    region: dict = field(default_factory=lambda: dict(REGION_KEYS))
    continuum: dict = field(default_factory=lambda: dict(CONTINUUM_KEYS))
    throughput: dict = field(default_factory=lambda: dict(THROUGHPUT_KEYS))

    def taus(self):
        g = self.tau_grid
        if isinstance(g, dict):
            return np.logspace(math.log10(g["min"]), math.log10(g["max"]), int(g["num"]))
        return np.asarray(g, dtype=float)

    def to_dict(self):
        return asdict(self)


def _path(prefix, key):
    return f"{prefix}.{key}" if prefix else key


def _number(value, path, positive=False, nonneg=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    if integer and int(value) != value:
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    if nonneg and not value >= 0:
        raise ConfigError(f"{path}: must be non-negative, got {value!r}")
    return int(value) if integer else float(value)


def _merge_section(defaults, given, prefix):
    if not isinstance(given, dict):
        raise ConfigError(f"{prefix}: expected an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{_path(prefix, unknown[0])}: unknown key")
    out = dict(defaults)
    out.update(given)
    return out


def _validate_tau_grid(g):
    if isinstance(g, dict):
        g = _merge_section({"min": None, "max": None, "num": None}, g, "tau_grid")
        lo = _number(g["min"], "tau_grid.min", positive=True)
        hi = _number(g["max"], "tau_grid.max", positive=True)
        num = _number(g["num"], "tau_grid.num", positive=True, integer=True)
        if not hi > lo and num > 1:
            raise ConfigError("tau_grid: max must exceed min")
        return {"min": lo, "max": hi, "num": num}
    if not isinstance(g, list) or not g:
        raise ConfigError("tau_grid: expected a non-empty list or {min, max, num}")
    vals = [_number(v, f"tau_grid[{i}]", positive=True) for i, v in enumerate(g)]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("tau_grid: durations must be strictly increasing")
    return vals


def validate(raw):
    """Build a :class:`RunConfig` from a plain dict, rejecting anything unknown."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    names = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    cfg = RunConfig()
    d = dict(raw)
    if "experiment" in d:
        if d["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}, got {d['experiment']!r}")
        cfg.experiment = d["experiment"]
    if "out" in d:
        if not isinstance(d["out"], str) or not d["out"]:
            raise ConfigError("out: expected a non-empty path string")
        cfg.out = d["out"]
    if "seed" in d:
        cfg.seed = _number(d["seed"], "seed", nonneg=True, integer=True)
    if "workers" in d:
        cfg.workers = _number(d["workers"], "workers", positive=True, integer=True, allow_none=True)
    if "N" in d:
        cfg.N = _number(d["N"], "N", positive=True, integer=True)
    for key in ("mu", "beta", "tau", "tau_cap"):
        if key in d:
            setattr(cfg, key, _number(d[key], key, positive=True))
    if "E_max" in d:
        cfg.E_max = _number(d["E_max"], "E_max", nonneg=True)
    if "E_cap" in d:
        cfg.E_cap = _number(d["E_cap"], "E_cap", positive=True, allow_none=True)
    if "eps_target" in d:
        cfg.eps_target = _number(d["eps_target"], "eps_target", positive=True)
        if cfg.eps_target > 0.5:
            raise ConfigError("eps_target: must lie in (0, 1/2]")
    if "tau_grid" in d:
        cfg.tau_grid = _validate_tau_grid(d["tau_grid"])
    if "p0" in d and d["p0"] is not None:
        p0 = d["p0"]
        if not isinstance(p0, list) or len(p0) != 2:
            raise ConfigError("p0: expected a two-element list")
        vals = [_number(v, f"p0[{i}]", nonneg=True) for i, v in enumerate(p0)]
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ConfigError("p0: entries must sum to 1")
        cfg.p0 = vals
    if "region" in d:
        r = _merge_section(REGION_KEYS, d["region"], "region")
        for key in ("n_E", "n_eps"):
            r[key] = _number(r[key], f"region.{key}", positive=True, integer=True)
        for key in ("E_min", "E_max", "eps_min"):
            r[key] = _number(r[key], f"region.{key}", positive=True)
        if not r["E_max"] > r["E_min"]:
            raise ConfigError("region.E_max: must exceed region.E_min")
        if not r["eps_min"] < 0.5:
            raise ConfigError("region.eps_min: must be below 1/2")
        cfg.region = r
    if "continuum" in d:
        c = _merge_section(CONTINUUM_KEYS, d["continuum"], "continuum")
        for key in ("k", "a0", "D"):
            c[key] = _number(c[key], f"continuum.{key}", positive=True)
        c["a1"] = _number(c["a1"], "continuum.a1")
        c["f1"] = _number(c["f1"], "continuum.f1")
        if c["a1"] > 0 and not c["idle"]:
            raise ConfigError("continuum.a1: must be <= 0 (barrier removed mid-protocol)")
        c["M"] = _number(c["M"], "continuum.M", positive=True, integer=True)
        if c["M"] % 2 or c["M"] < 4:
            raise ConfigError("continuum.M: must be an even number >= 4")
        if not isinstance(c["taus"], list) or not c["taus"]:
            raise ConfigError("continuum.taus: expected a non-empty list")
        c["taus"] = [_number(v, f"continuum.taus[{i}]", positive=True) for i, v in enumerate(c["taus"])]
        c["dt"] = _number(c["dt"], "continuum.dt", positive=True, allow_none=True)
        if not isinstance(c["idle"], bool):
            raise ConfigError("continuum.idle: expected true or false")
        if not isinstance(c["snapshots"], list):
            raise ConfigError("continuum.snapshots: expected a list of times")
        c["snapshots"] = [_number(v, f"continuum.snapshots[{i}]", nonneg=True) for i, v in enumerate(c["snapshots"])]
        cfg.continuum = c
    if "throughput" in d:
        t = _merge_section(THROUGHPUT_KEYS, d["throughput"], "throughput")
        for key in ("n", "tau_sw", "T"):
            t[key] = _number(t[key], f"throughput.{key}", positive=True)
        t["eps"] = _number(t["eps"], "throughput.eps", positive=True)
        if t["eps"] >= 0.5:
            raise ConfigError("throughput.eps: must lie in (0, 1/2)")
        cfg.throughput = t
    return cfg


def load_file(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def env_overrides(environ=None):
    """Top-level scalar overrides from ``BITRESET_<KEY>`` variables (JSON-decoded)."""
    environ = os.environ if environ is None else environ
    fields = {name.upper(): name for name in RunConfig.__dataclass_fields__}
    out = {}
    for var, text in environ.items():
        if not var.startswith(ENV_PREFIX):
            continue
        key = var[len(ENV_PREFIX):]
        if key not in fields:
            raise ConfigError(f"{var}: unknown configuration key")
        try:
            out[fields[key]] = json.loads(text)
        except json.JSONDecodeError:
            out[fields[key]] = text
    return out


def parse_tau_grid(text):
    """``"lo:hi:num"`` (log-spaced) or a comma-separated list of durations."""
    try:
        if ":" in text:
            lo, hi, num = text.split(":")
            return {"min": float(lo), "max": float(hi), "num": int(num)}
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--tau-grid: cannot parse {text!r}") from None


def parse_config(path=None, overrides=None, environ=None):
    """Merge file, environment and explicit overrides, then validate."""
    raw = load_file(path) if path else {}
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    raw = dict(raw)
    raw.update(env_overrides(environ))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate(raw)

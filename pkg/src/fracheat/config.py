"""Experiment configuration: a YAML key-value document validated at parse time."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Optional

import yaml

from .errors import ConfigError, DomainError
from .hurst import REGULAR, HurstVector

EXPERIMENTS = ("noise-cov", "sigma-asymptotics", "wick-growth", "cauchy-decay",
               "solve-regular", "solve-rough", "converge-u", "kernel-checks")

# key -> default; None marks "derived or optional"
DEFAULTS: dict = {
    "experiment": None,
    "H": None,
    "n": None,
    "n_range": None,
    "samples": 100,
    "seed": 0,
    "grid": {"L": 2.0, "N": 256},
    "time": {"T": 0.5, "dt": 0.015625},
    "t": 1.0,
    "alpha": 0.0,
    "beta": None,
    "s": None,
    "p": 2.0,
    "cutoff": {"inner": 0.5, "outer": 1.0},
    "chi": {"inner": 0.25, "outer": 0.5},
    "phi": 0.1,
    "tol": 1e-10,
    "quad_tol": 1e-6,
    "output": "out",
}
_NESTED = {"grid": ("L", "N"), "time": ("T", "dt"), "cutoff": ("inner", "outer"), "chi": ("inner", "outer")}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    hurst: HurstVector
    n_range: tuple
    samples: int
    seed: int
    L: float
    N: int
    T: float
    dt: float
    t: float
    alpha: float
    beta: Optional[float]
    s: Optional[float]
    p: float
    cutoff: tuple
    chi: tuple
    phi: float
    tol: float
    quad_tol: float
    output: str

    @property
    def d(self) -> int:
        return self.hurst.d

    @property
    def n(self) -> int:
        return self.n_range[0]

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "H": list(self.hurst.h),
            "n_range": list(self.n_range),
            "samples": self.samples,
            "seed": self.seed,
            "grid": {"L": self.L, "N": self.N},
            "time": {"T": self.T, "dt": self.dt},
            "t": self.t,
            "alpha": self.alpha,
            "beta": self.beta,
            "s": self.s,
            "p": self.p,
            "cutoff": {"inner": self.cutoff[0], "outer": self.cutoff[1]},
            "chi": {"inner": self.chi[0], "outer": self.chi[1]},
            "phi": self.phi,
            "tol": self.tol,
            "quad_tol": self.quad_tol,
            "output": self.output,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical serialization (output path excluded)."""
        doc = self.to_dict()
        doc.pop("output")
        return hashlib.sha256(dump(doc).encode()).hexdigest()


def dump(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None)


def _number(key: str, value: Any, kind=float):
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"key '{key}': expected a number, got {value!r}")
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': expected a number, got {value!r}") from None
    if kind is int and out != value:
        raise ConfigError(f"key '{key}': expected an integer, got {value!r}")
    return out


def _pair(key: str, value: Any, names: tuple) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"key '{key}': expected a mapping with keys {names}")
    for k in value:
        if k not in names:
            raise ConfigError(f"unknown key '{key}.{k}'")
    return value


def normalize(doc: dict) -> dict:
    """Fill defaults and coerce types; the canonical form of a document."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a key-value mapping")
    for k in doc:
        if k not in DEFAULTS:
            raise ConfigError(f"unknown key '{k}'")
    if "experiment" not in doc:
        raise ConfigError("missing key 'experiment'")
    exp = doc["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"key 'experiment': unknown experiment {exp!r}")
    if "H" not in doc:
        raise ConfigError("missing key 'H'")
    h = doc["H"]
    if not isinstance(h, (list, tuple)):
        raise ConfigError("key 'H': expected a list of Hurst components")
    h = [_number("H", x) for x in h]
    if "n" in doc and "n_range" in doc:
        raise ConfigError("keys 'n' and 'n_range' are mutually exclusive")
    if "n_range" in doc:
        nr = doc["n_range"]
        if not (isinstance(nr, (list, tuple)) and len(nr) == 2):
            raise ConfigError("key 'n_range': expected [first, last]")
        n_range = [_number("n_range", x, int) for x in nr]
    else:
        n = _number("n", doc.get("n", 4), int)
        n_range = [n, n]
    out = {"experiment": exp, "H": h, "n_range": n_range}
    for key in ("samples", "seed"):
        out[key] = _number(key, doc.get(key, DEFAULTS[key]), int)
    for key, names in _NESTED.items():
        given = _pair(key, doc.get(key, {}), names)
        out[key] = {}
        for name in names:
            kind = int if (key, name) == ("grid", "N") else float
            out[key][name] = _number(f"{key}.{name}", given.get(name, DEFAULTS[key][name]), kind)
    for key in ("t", "alpha", "p", "phi", "tol", "quad_tol"):
        out[key] = _number(key, doc.get(key, DEFAULTS[key]))
    for key in ("beta", "s"):
        out[key] = None if doc.get(key) is None else _number(key, doc[key])
    out["output"] = str(doc.get("output", DEFAULTS["output"]))
    return out


def _check_regime(exp: str, hurst: HurstVector, cfg: dict) -> None:
    tags = hurst.tags
    if exp == "solve-regular" and REGULAR not in tags:
        raise ConfigError(f"key 'H': regime mismatch, {exp} needs alpha_H > 0 (tags {sorted(tags)})")
    if exp == "solve-rough" and not hurst.is_rough:
        raise ConfigError(f"key 'H': regime mismatch, {exp} needs a RoughWick or Rough2D vector "
                          f"(tags {sorted(tags)})")
    if exp == "converge-u" and not (REGULAR in tags or hurst.is_rough):
        raise ConfigError(f"key 'H': regime mismatch, {exp} needs a regular or rough vector")
    if exp == "sigma-asymptotics" and hurst.kappa < -1e-12:
        raise ConfigError("key 'H': regime mismatch, sigma-asymptotics needs kappa >= 0")
    if exp == "wick-growth" and not cfg["alpha"] > 0:
        raise ConfigError("key 'alpha': wick-growth needs alpha > 0")
    if exp in ("solve-rough", "converge-u") and hurst.is_rough:
        lo, hi = hurst.rough_alpha_window()
        if not lo < cfg["alpha"] < hi:
            raise ConfigError(f"key 'alpha': {cfg['alpha']} outside the rough window ({lo:.4g}, {hi:.4g})")
    if exp in ("noise-cov", "wick-growth", "cauchy-decay", "solve-regular", "solve-rough", "converge-u") \
            and hurst.d not in (1, 2):
        raise ConfigError(f"key 'H': {exp} supports d in {{1, 2}}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    return from_dict(doc)


def from_dict(doc: dict) -> ExperimentConfig:
    c = normalize(doc)
    try:
        hurst = HurstVector(tuple(c["H"]))
    except DomainError as exc:
        raise ConfigError(f"key 'H': {exc}") from None
    lo, hi = c["n_range"]
    if not 1 <= lo <= hi:
        raise ConfigError("key 'n_range': need 1 <= first <= last")
    if c["samples"] < 1:
        raise ConfigError("key 'samples': must be >= 1")
    if not 0 <= c["seed"] < 2**64:
        raise ConfigError("key 'seed': must be an unsigned 64-bit integer")
    N = c["grid"]["N"]
    if N < 2 or N & (N - 1):
        raise ConfigError("key 'grid.N': must be a power of two")
    if not c["grid"]["L"] > 0:
        raise ConfigError("key 'grid.L': must be positive")
    T, dt = c["time"]["T"], c["time"]["dt"]
    if not 0 < T <= 1:
        raise ConfigError("key 'time.T': must lie in (0, 1]")
    if not 0 < dt <= T:
        raise ConfigError("key 'time.dt': must lie in (0, T]")
    if not c["p"] >= 2:
        raise ConfigError("key 'p': must be >= 2")
    for key in ("cutoff", "chi"):
        if not 0 < c[key]["inner"] < c[key]["outer"] <= c["grid"]["L"] / 2:
            raise ConfigError(f"key '{key}': need 0 < inner < outer <= L/2")
    if not c["tol"] > 0 or not c["quad_tol"] > 0:
        raise ConfigError("key 'tol': tolerances must be positive")
    _check_regime(c["experiment"], hurst, c)
    return ExperimentConfig(
        c["experiment"], hurst, (lo, hi), c["samples"], c["seed"], c["grid"]["L"], N, T, dt, c["t"],
        c["alpha"], c["beta"], c["s"], c["p"], (c["cutoff"]["inner"], c["cutoff"]["outer"]),
        (c["chi"]["inner"], c["chi"]["outer"]), c["phi"], c["tol"], c["quad_tol"], c["output"])


def serialize(cfg: ExperimentConfig) -> str:
    return dump(cfg.to_dict())

"""JSON run configuration: parsing, defaults and cross-field validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .basis import TorusSpec
from .errors import ConfigError
from .estimators import KINDS
from .experiments import ExperimentPlan
from .noise import NoiseSpec
from .solver import SolverConfig

SCHEMA_VERSION = 1

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "torus": {"L": 2.0 * math.pi},
    "noise": {"gamma": None, "master_seed": 0},
    "solver": {"nu": None, "grid_n": 64, "m_sim": None, "T": 1.0, "dt": 1e-3,
               "noise_refine": 0, "u0": None, "track_residual": False, "nonlinear": True},
    "estimators": [],
    "experiment": {"n_grid": [8, 16, 32], "replicates": 50, "first_replicate": 0,
                   "ks_alpha": 0.01, "variance_band": [0.75, 1.33], "stride": 1,
                   "alpha_primes": [0.4], "max_failure_fraction": 0.1},
    "linear": {"replicates": 400, "modes": 20, "beta": None, "n_grid": [16, 32, 64, 128],
               "min_within": 18, "z_bound": 3.0},
}

_REQUIRED = (("noise", "gamma"), ("solver", "nu"))


@dataclass
class RunConfig:
    resolved: dict  # defaults filled in; echoed to the manifest
    solver: SolverConfig
    estimators: list[tuple[float, str]]
    regimes: dict[float, str]

    @property
    def experiment(self) -> dict:
        return self.resolved["experiment"]

    @property
    def linear(self) -> dict:
        return self.resolved["linear"]

    def digest(self) -> str:
        return config_digest(self.resolved)

    def plan(self, workers: int = 1, keep_trajectories: bool = False) -> ExperimentPlan:
        exp = self.experiment
        try:
            return ExperimentPlan(self.solver, self.estimators, list(exp["n_grid"]),
                                  int(exp["replicates"]), int(exp["first_replicate"]),
                                  float(exp["ks_alpha"]), tuple(exp["variance_band"]),
                                  int(exp["stride"]), workers, keep_trajectories)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("experiment", str(exc)) from None


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _merge(defaults: Any, given: Any, path: str) -> Any:
    if isinstance(defaults, dict) and defaults:
        if given is None:
            given = {}
        if not isinstance(given, dict):
            raise ConfigError(path, "expected an object")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}".lstrip("."), "unknown key")
        return {k: _merge(v, given.get(k), f"{path}.{k}".lstrip(".")) for k, v in defaults.items()}
    return copy.deepcopy(defaults) if given is None else given


def _number(d: dict, path: str, key: str, kind=float):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{path}.{key}", "expected an integer")
    return kind(v)


def validate(doc: dict, seed: Optional[int] = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}")
    doc = {k: v for k, v in doc.items() if k != "derived"}
    res = _merge(DEFAULTS, doc, "")
    for section, key in _REQUIRED:
        if res[section][key] is None:
            raise ConfigError(f"{section}.{key}", "required")
    if seed is not None:
        res["noise"]["master_seed"] = seed

    gamma = _number(res["noise"], "noise", "gamma")
    if not gamma > 1:
        raise ConfigError("noise.gamma", "gamma must exceed 1")
    master_seed = _number(res["noise"], "noise", "master_seed", int)
    if not 0 <= master_seed < 2 ** 64:
        raise ConfigError("noise.master_seed", "must be a 64-bit unsigned integer")
    L = _number(res["torus"], "torus", "L")
    if not L > 0:
        raise ConfigError("torus.L", "period length must be positive")

    s = res["solver"]
    u0 = s["u0"]
    if u0 is not None:
        if not isinstance(u0, dict):
            raise ConfigError("solver.u0", "expected an object mapping mode index to amplitude")
        try:
            u0 = {int(k): float(v) for k, v in u0.items()}
        except (TypeError, ValueError):
            raise ConfigError("solver.u0", "mode indices must be integers, amplitudes numbers") from None
    m_sim = None if s["m_sim"] is None else _number(s, "solver", "m_sim", int)
    solver = SolverConfig(
        nu=_number(s, "solver", "nu"), noise=NoiseSpec(gamma, master_seed), torus=TorusSpec(L),
        grid_n=_number(s, "solver", "grid_n", int), T=_number(s, "solver", "T"),
        dt=_number(s, "solver", "dt"), m_sim=m_sim, u0=u0,
        track_residual=bool(s["track_residual"]), nonlinear=bool(s["nonlinear"]),
        noise_refine=_number(s, "solver", "noise_refine", int))

    estimators: list[tuple[float, str]] = []
    regimes: dict[float, str] = {}
    for i, item in enumerate(res["estimators"]):
        path = f"estimators[{i}]"
        if not isinstance(item, dict) or "alpha" not in item:
            raise ConfigError(path, "expected an object with an alpha")
        alpha = _number(item, path, "alpha")
        kind = item.get("kind", "all")
        kinds = KINDS if kind == "all" else (kind,)
        for k in kinds:
            if k not in KINDS:
                raise ConfigError(f"{path}.kind", f"must be one of {', '.join(KINDS)} or all")
            estimators.append((alpha, k))
        if alpha > gamma - 0.5:
            regimes[alpha] = "normal"
        elif alpha > gamma - 1.0:
            regimes[alpha] = "consistent"
        else:
            raise ConfigError(f"{path}.alpha", "alpha must exceed gamma - 1")

    exp = res["experiment"]
    half = solver.mode_count // 2
    grid = exp["n_grid"]
    if not isinstance(grid, list) or not grid or not all(isinstance(n, int) for n in grid):
        raise ConfigError("experiment.n_grid", "expected a non-empty list of integers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("experiment.n_grid", "N grid must be strictly increasing")
    for n in grid:
        if not 1 <= n <= half:
            raise ConfigError("experiment.n_grid", f"N={n} exceeds M_sim/2 = {half}")
    if _number(exp, "experiment", "replicates", int) < 2:
        raise ConfigError("experiment.replicates", "at least 2 replicates required")
    lo, hi = exp["variance_band"]
    if not 0 < lo < 1 < hi:
        raise ConfigError("experiment.variance_band", "band must bracket 1")
    res["derived"] = {"m_sim": solver.mode_count,
                      "regimes": {str(a): r for a, r in regimes.items()}}
    return RunConfig(res, solver, estimators, regimes)


def parse_config(path, seed: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from None
    return validate(doc, seed)

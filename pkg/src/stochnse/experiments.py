"""Monte Carlo harness: consistency sweeps, normality studies, linear and residual batteries."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import BlowUp, ConfigError, DegenerateDenominator, ExponentOutOfRange
from .estimators import KINDS, EstimatorConfig, estimate, theoretical_variance
from .linear import linear_energy_growth, mode_integral_means, simulate_linear_batch
from .basis import build_basis
from .solver import SolverConfig, simulate

log = logging.getLogger(__name__)

MIN_KS_REPLICATES = 8
INSUFFICIENT_REPLICATES = "InsufficientReplicates"


@dataclass
class ExperimentPlan:
    solver: SolverConfig
    estimators: list[tuple[float, str]]  # (alpha, kind)
    n_grid: list[int]
    replicates: int
    first_replicate: int = 0
    ks_alpha: float = 0.01
    variance_band: tuple[float, float] = (0.75, 1.33)
    stride: int = 1
    workers: int = 1
    keep_trajectories: bool = False

    def __post_init__(self):
        if self.replicates < 2:
            raise ConfigError("experiment.replicates", "at least 2 replicates required")
        if not self.n_grid:
            raise ConfigError("experiment.n_grid", "empty N grid")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("experiment.n_grid", "N grid must be strictly increasing")
        half = self.solver.mode_count // 2
        if self.n_grid[0] < 1 or self.n_grid[-1] > half:
            raise ConfigError("experiment.n_grid", f"every N must lie in 1..M_sim/2 = {half}")
        for alpha, kind in self.estimators:
            if kind not in KINDS:
                raise ConfigError("estimators.kind", f"unknown estimator {kind!r}")

    @property
    def replicate_ids(self) -> list[int]:
        return list(range(self.first_replicate, self.first_replicate + self.replicates))


@dataclass
class McEntry:
    kind: str
    alpha: float
    N: int
    values: list[float]
    n_success: int
    mean: float
    bias: float
    median_abs_error: float
    mean_abs_error: float
    variance: float
    predicted_variance: Optional[float] = None
    idealized_variance: Optional[float] = None
    variance_ratio: Optional[float] = None
    ks_statistic: Optional[float] = None
    ks_pvalue: Optional[float] = None
    flags: list[str] = field(default_factory=list)


@dataclass
class McReport:
    study: str
    nu_true: float
    replicates: list[int]
    entries: list[McEntry]
    failures: dict[int, str]
    wall_time: float
    config_hash: str = ""
    trajectories: Optional[list] = field(default=None, repr=False)
    values: dict = field(default_factory=dict, repr=False)  # replicate -> {(kind, alpha, N): value}
    plan: Optional[ExperimentPlan] = field(default=None, repr=False)

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / len(self.replicates)

    @property
    def success_fraction(self) -> float:
        return 1.0 - self.failure_fraction

    def entry(self, kind: str, N: int, alpha: Optional[float] = None) -> McEntry:
        for e in self.entries:
            if e.kind == kind and e.N == N and (alpha is None or e.alpha == alpha):
                return e
        raise KeyError((kind, N, alpha))

    def median_trend(self, kind: str, alpha: Optional[float] = None) -> list[tuple[int, float]]:
        return [(e.N, e.median_abs_error) for e in self.entries
                if e.kind == kind and (alpha is None or e.alpha == alpha)]

    def to_dict(self) -> dict:
        d = {"study": self.study, "nu_true": self.nu_true, "config_hash": self.config_hash,
             "replicates": self.replicates, "failures": {str(k): v for k, v in self.failures.items()},
             "failure_fraction": self.failure_fraction, "success_fraction": self.success_fraction,
             "wall_time": self.wall_time, "entries": [asdict(e) for e in self.entries]}
        return d

    def rows(self) -> list[tuple]:
        """Flat ``(estimator, alpha, N, replicate, value)`` records."""
        return [(e.kind, e.alpha, e.N, r, v) for e in self.entries
                for r, v in zip(self.replicates, e.values)]


def _replicate_values(plan: ExperimentPlan, replicate: int):
    traj = simulate(plan.solver, replicate)
    values = {}
    for alpha, kind in plan.estimators:
        for N in plan.n_grid:
            res = estimate(traj, EstimatorConfig(alpha, N, plan.stride), kind)
            values[(kind, alpha, N)] = res.value
            values[("kappa", alpha, N)] = res.kappa
    return values, (traj if plan.keep_trajectories else None)


def _safe_replicate(plan: ExperimentPlan, replicate: int):
    try:
        return _replicate_values(plan, replicate) + (None,)
    except (BlowUp, DegenerateDenominator) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def collect(plan: ExperimentPlan) -> tuple[dict, dict, list]:
    """Per-replicate estimator values keyed by replicate index (deterministic order)."""
    ids = plan.replicate_ids
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            outcomes = list(pool.map(_safe_replicate, [plan] * len(ids), ids))
    else:
        outcomes = [_safe_replicate(plan, r) for r in ids]
    values, failures, trajs = {}, {}, []
    for r, (vals, traj, err) in zip(ids, outcomes):
        if err is not None:
            failures[r] = err
            log.warning("replicate %d failed: %s", r, err)
        else:
            values[r] = vals
        trajs.append(traj)
    return values, failures, trajs


def _summarize(plan: ExperimentPlan, ids: Sequence[int], values: dict, with_normality: bool) -> list[McEntry]:
    nu = plan.solver.nu
    gamma = plan.solver.noise.gamma
    basis = build_basis(plan.solver.torus, plan.n_grid[-1])
    entries = []
    for alpha, kind in plan.estimators:
        for N in plan.n_grid:
            vals = np.array([values[r][(kind, alpha, N)] if r in values else np.nan for r in ids])
            ok = vals[np.isfinite(vals)]
            err = ok - nu
            e = McEntry(kind, alpha, N, vals.tolist(), len(ok),
                        float(np.mean(ok)) if len(ok) else math.nan,
                        float(np.mean(err)) if len(ok) else math.nan,
                        float(np.median(np.abs(err))) if len(ok) else math.nan,
                        float(np.mean(np.abs(err))) if len(ok) else math.nan,
                        float(np.var(ok, ddof=1)) if len(ok) > 1 else math.nan)
            if alpha > gamma - 0.5:
                finite, ideal = theoretical_variance(basis, EstimatorConfig(alpha, N), nu, gamma,
                                                     plan.solver.T)
                e.predicted_variance, e.idealized_variance = finite, ideal
                if len(ok) > 1:
                    scaled = N * err
                    e.variance_ratio = float(np.var(scaled, ddof=1) / finite)
                    if with_normality:
                        if len(ok) < MIN_KS_REPLICATES:
                            e.flags.append(INSUFFICIENT_REPLICATES)
                        else:
                            ks = stats.kstest(scaled / math.sqrt(finite), "norm")
                            e.ks_statistic, e.ks_pvalue = float(ks.statistic), float(ks.pvalue)
            entries.append(e)
    return entries


def _run(plan: ExperimentPlan, study: str, with_normality: bool) -> McReport:
    start = time.perf_counter()
    values, failures, trajs = collect(plan)
    ids = plan.replicate_ids
    entries = _summarize(plan, ids, values, with_normality)
    return McReport(study, plan.solver.nu, ids, entries, failures,
                    time.perf_counter() - start, plan.solver.digest(),
                    trajs if plan.keep_trajectories else None, values, plan)


def run_consistency(plan: ExperimentPlan) -> McReport:
    gamma = plan.solver.noise.gamma
    for alpha, _ in plan.estimators:
        if not alpha > gamma - 1.0:
            raise ExponentOutOfRange(f"consistency needs alpha > gamma - 1, got alpha={alpha}")
    return _run(plan, "consistency", with_normality=False)


def run_normality(plan: ExperimentPlan) -> McReport:
    gamma = plan.solver.noise.gamma
    for alpha, _ in plan.estimators:
        if not alpha > gamma - 0.5:
            raise ExponentOutOfRange(f"normality needs alpha > gamma - 1/2, got alpha={alpha}")
    return _run(plan, "normality", with_normality=True)


def subset(report: McReport, replicates: Sequence[int], study: Optional[str] = None) -> McReport:
    """Re-summarise a report over a subset of its replicates.

    Keyed noise makes this identical to running the plan on that subset alone.
    """
    plan = report.plan
    ids = list(replicates)
    missing = set(ids) - set(report.replicates)
    if missing:
        raise ValueError(f"replicates {sorted(missing)} not in report")
    study = study or report.study
    entries = _summarize(plan, ids, report.values, study == "normality")
    return McReport(study, report.nu_true, ids, entries,
                    {r: m for r, m in report.failures.items() if r in ids}, report.wall_time,
                    report.config_hash, None, report.values, plan)


@dataclass
class LinearBatteryReport:
    modes: list[int]  # 1-based
    eigenvalues: list[float]
    empirical_mean: list[float]
    analytic_mean: list[float]
    std_error: list[float]
    z_score: list[float]
    n_grid: list[int]
    beta: float
    exact_growth: list[float]
    empirical_growth: list[float]
    exact_slope: float
    empirical_slope: float
    target_slope: float
    replicates: int

    def within(self, z: float) -> int:
        return int(np.sum(np.abs(self.z_score) < z))

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_linear_battery(config: SolverConfig, replicates: int = 400, modes: int = 20,
                       beta: Optional[float] = None, n_grid: Sequence[int] = (16, 32, 64, 128),
                       first_replicate: int = 0) -> LinearBatteryReport:
    """Empirical vs exact moments of the linear Stokes modes.

    Per-mode z-scores compare the Monte Carlo mean of ``int u_k^2`` to the
    exact formula; the growth fit uses ``E int |A^beta Ubar^N|^2`` on log-log axes.
    """
    if not config.T > 0:
        raise ConfigError("solver.T", "horizon must be positive")
    if replicates < 2:
        raise ConfigError("experiment.replicates", "at least 2 replicates required")
    gamma, nu, T = config.noise.gamma, config.nu, config.T
    beta = gamma + 1.0 if beta is None else beta
    if beta <= gamma:
        raise ExponentOutOfRange(f"beta={beta} must exceed gamma={gamma}")
    m = max(modes, max(n_grid))
    basis = build_basis(config.torus, m)
    lam = basis.eigenvalues
    ids = range(first_replicate, first_replicate + replicates)
    integrals = simulate_linear_batch(lam, config.noise, nu, T, config.dt, ids, config.noise_refine)
    emp = integrals.mean(axis=0)
    se = integrals.std(axis=0, ddof=1) / math.sqrt(replicates)
    exact = mode_integral_means(lam, nu, gamma, T)
    z = (emp - exact) / se
    exact_growth = [linear_energy_growth(basis, nu, gamma, T, beta, N) for N in n_grid]
    emp_growth = [float(np.sum(lam[:N] ** (2 * beta) * emp[:N])) for N in n_grid]
    return LinearBatteryReport(
        modes=list(range(1, modes + 1)), eigenvalues=lam[:modes].tolist(),
        empirical_mean=emp[:modes].tolist(), analytic_mean=exact[:modes].tolist(),
        std_error=se[:modes].tolist(), z_score=z[:modes].tolist(), n_grid=list(n_grid), beta=beta,
        exact_growth=exact_growth, empirical_growth=emp_growth,
        exact_slope=fit_loglog_slope(n_grid, exact_growth),
        empirical_slope=fit_loglog_slope(n_grid, emp_growth),
        target_slope=2 * beta - 2 * gamma, replicates=replicates)


@dataclass
class ResidualReport:
    alpha_primes: list[float]
    n_grid: list[int]
    replicates: list[int]
    i2: dict[float, list[list[float]]]  # alpha' -> per replicate, per N
    i2_mean: dict[float, list[float]]
    decay_factor: dict[float, float]  # I2 at first N / I2 at last N

    def to_dict(self) -> dict:
        return {"alpha_primes": self.alpha_primes, "n_grid": self.n_grid,
                "replicates": self.replicates,
                "i2": {str(a): v for a, v in self.i2.items()},
                "i2_mean": {str(a): v for a, v in self.i2_mean.items()},
                "decay_factor": {str(a): v for a, v in self.decay_factor.items()}}


def residual_ratio(traj, alpha_prime: float, N: int, nu: float) -> float:
    """``int |A^(1+a') R^N|^2 dt / E int |A^(1+a') Ubar^N|^2 dt``."""
    r = traj.residual
    if r is None:
        raise ConfigError("solver.track_residual", "trajectory has no residual")
    lam = traj.basis.eigenvalues[:N]
    beta = 1.0 + alpha_prime
    num = traj.dt * float(np.sum(np.sum(r[:-1, :N] ** 2, axis=0) * lam ** (2 * beta)))
    return num / linear_energy_growth(traj.basis, nu, traj.gamma, traj.T, beta, N)


def run_residual_study(config: SolverConfig, alpha_primes: Sequence[float],
                       n_grid: Sequence[int], replicates: int = 1,
                       first_replicate: int = 0) -> ResidualReport:
    if not config.track_residual:
        raise ConfigError("solver.track_residual", "residual study needs track_residual")
    n_grid = list(n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("experiment.n_grid", "N grid must be strictly increasing")
    if n_grid[-1] > config.mode_count:
        raise ConfigError("experiment.n_grid", f"N exceeds M_sim = {config.mode_count}")
    ids = list(range(first_replicate, first_replicate + replicates))
    i2 = {a: [] for a in alpha_primes}
    for r in ids:
        traj = simulate(config, r)
        for a in alpha_primes:
            i2[a].append([residual_ratio(traj, a, N, config.nu) for N in n_grid])
    mean = {a: np.mean(v, axis=0).tolist() for a, v in i2.items()}
    decay = {a: (m[0] / m[-1] if m[-1] > 0 else math.inf) for a, m in mean.items()}
    return ResidualReport(list(alpha_primes), n_grid, ids, i2, mean, decay)


def linear_moment_rows(report: LinearBatteryReport) -> list[tuple]:
    """``(mode, empirical_mean, analytic_mean, z_score)`` for the verify-linear CSV."""
    return list(zip(report.modes, report.empirical_mean, report.analytic_mean, report.z_score))


def with_solver(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    return replace(plan, solver=replace(plan.solver, **changes))

"""Viscosity estimators from the first N spectral modes of one sample path.

All time integrals are left-endpoint sums on the observation grid.  The Ito
integral ``int u_k du_k`` uses the analytic quadratic-variation correction
``(u_k(T)^2 - u_k(0)^2 - T lambda_k^-2gamma) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .basis import StokesBasis
from .errors import DegenerateDenominator, ExponentOutOfRange
from .solver import PseudoSpectral
from .trajectory import Trajectory

KINDS = ("tilde", "check", "hat")
_CHUNK = 256


@dataclass(frozen=True)
class EstimatorConfig:
    alpha: float
    N: int
    stride: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    def regime(self, gamma: float) -> str:
        """``normal`` if alpha > gamma - 1/2, ``consistent`` if alpha > gamma - 1, else ``none``."""
        if self.alpha > gamma - 0.5:
            return "normal"
        if self.alpha > gamma - 1.0:
            return "consistent"
        return "none"


@dataclass(frozen=True)
class EstimatorResult:
    kind: str
    value: float
    numerator_ito: float
    numerator_nonlinear: float
    denominator: float
    kappa: float
    alpha: float
    N: int

    def to_dict(self) -> dict:
        return asdict(self)


def _observed(traj: Trajectory, stride: int) -> Trajectory:
    return traj.subsample(stride)


def ito_mode_integral(traj: Trajectory, k: int, alpha: float, gamma: Optional[float] = None,
                      form: str = "analytic") -> float:
    """``lambda_k^(1+2 alpha) int_0^T u_k du_k`` for the 0-based mode ``k``.

    ``form="analytic"`` is the closed form with the analytic correction;
    ``form="sum"`` is the left-endpoint sum ``sum u_i du_i`` plus
    ``(realised - analytic quadratic variation) / 2``, identical up to round-off.
    """
    gamma = traj.gamma if gamma is None else gamma
    lam = traj.basis.eigenvalues[k]
    u = traj.states[:, k]
    qv = traj.T * lam ** (-2.0 * gamma)
    if form == "analytic":
        core = 0.5 * (u[-1] ** 2 - u[0] ** 2 - qv)
    elif form == "sum":
        du = np.diff(u)
        core = float(np.dot(u[:-1], du)) + 0.5 * (float(np.dot(du, du)) - qv)
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(lam ** (1.0 + 2.0 * alpha) * core)


def ito_numerator(traj: Trajectory, alpha: float, N: int) -> float:
    lam = traj.basis.eigenvalues[:N]
    u0, uT = traj.states[0, :N], traj.states[-1, :N]
    core = 0.5 * (uT * uT - u0 * u0 - traj.T * lam ** (-2.0 * traj.gamma))
    return float(np.sum(lam ** (1.0 + 2.0 * alpha) * core))


def ito_sum(traj: Trajectory, alpha: float, N: int) -> float:
    """Uncorrected left-endpoint sum ``sum_k lambda_k^(1+2a) sum_i u_k(t_i) du_k(t_i)``."""
    u = traj.states[:, :N]
    lam = traj.basis.eigenvalues[:N]
    return float(np.sum(lam ** (1.0 + 2.0 * alpha) * np.einsum("ik,ik->k", u[:-1], np.diff(u, axis=0))))


def denominator(traj: Trajectory, alpha: float, N: int) -> float:
    """Left Riemann sum of ``|A^(1+alpha) U^N|^2`` over ``[0, T]``."""
    _check_N(traj, N)
    u = traj.states[:-1, :N]
    lam = traj.basis.eigenvalues[:N]
    den = traj.dt * float(np.sum(np.sum(u * u, axis=0) * lam ** (2.0 + 2.0 * alpha)))
    if not den > 0:
        raise DegenerateDenominator(f"denominator {den} for N={N}: path vanishes on the first N modes")
    return den


def nonlinear_series(traj: Trajectory, truncate: Optional[int] = None) -> np.ndarray:
    """``b_k(t_i)`` for every left endpoint ``t_i``, shape ``(n_steps, M)``.

    ``truncate=None`` evaluates ``P_M B(U)`` from the full state; an integer
    ``N`` evaluates ``P_N B(U^N)`` (shape ``(n_steps, N)``).  Results are
    cached on the trajectory.
    """
    key = ("b", truncate)
    if key in traj._cache:
        return traj._cache[key]
    if not traj.config.get("nonlinear", True):
        # the observed model is the Stokes system: no transport term to subtract
        width = traj.mode_count if truncate is None else truncate
        return np.zeros((traj.n_steps, width))
    if truncate is None:
        evaluator = PseudoSpectral(traj.basis, traj.config.get("grid_n"))
        states = traj.states[:-1]
    else:
        evaluator = PseudoSpectral(traj.basis.truncate(truncate))
        states = traj.states[:-1, :truncate]
    out = np.empty_like(states)
    for s in range(0, len(states), _CHUNK):
        out[s:s + _CHUNK] = evaluator(states[s:s + _CHUNK])
    traj._cache[key] = out
    return out


def nonlinear_numerator(traj: Trajectory, alpha: float, N: int, truncated: bool = False) -> float:
    b = nonlinear_series(traj, N if truncated else None)[:, :N]
    u = traj.states[:-1, :N]
    lam = traj.basis.eigenvalues[:N]
    return traj.dt * float(np.sum(np.einsum("ik,ik->k", u, b) * lam ** (1.0 + 2.0 * alpha)))


def _check_N(traj: Trajectory, N: int):
    if not 1 <= N <= traj.mode_count:
        raise ValueError(f"N={N} outside 1..{traj.mode_count}")


def _estimate(traj: Trajectory, cfg: EstimatorConfig, kind: str) -> EstimatorResult:
    obs = _observed(traj, cfg.stride)
    _check_N(obs, cfg.N)
    den = denominator(obs, cfg.alpha, cfg.N)
    ito = ito_numerator(obs, cfg.alpha, cfg.N)
    nl_full = nonlinear_numerator(obs, cfg.alpha, cfg.N)
    kappa = -nl_full / den
    if kind == "tilde":
        nl = nl_full
    elif kind == "check":
        nl = nonlinear_numerator(obs, cfg.alpha, cfg.N, truncated=True)
    elif kind == "hat":
        nl = 0.0
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    value = -ito / den if kind == "hat" else -(ito + nl) / den
    return EstimatorResult(kind, value, ito, nl, den, kappa, cfg.alpha, cfg.N)


def estimate_tilde(traj: Trajectory, cfg: EstimatorConfig) -> EstimatorResult:
    return _estimate(traj, cfg, "tilde")


def estimate_check(traj: Trajectory, cfg: EstimatorConfig) -> EstimatorResult:
    return _estimate(traj, cfg, "check")


def estimate_hat(traj: Trajectory, cfg: EstimatorConfig) -> EstimatorResult:
    return _estimate(traj, cfg, "hat")


def kappa(traj: Trajectory, cfg: EstimatorConfig) -> float:
    return _estimate(traj, cfg, "hat").kappa


def estimate(traj: Trajectory, cfg: EstimatorConfig, kind: str) -> EstimatorResult:
    return _estimate(traj, cfg, kind)


def noise_martingale(traj: Trajectory, alpha: float, N: int) -> float:
    """``sum_k lambda_k^(1+2a-gamma) sum_i u_k(t_i) dW_k(t_i)`` from the stored noise record."""
    if traj.increments is None:
        raise ValueError("trajectory carries no noise record")
    u = traj.states[:-1, :N]
    lam = traj.basis.eigenvalues[:N]
    w = traj.increments[:, :N]
    return float(np.sum(lam ** (1.0 + 2.0 * alpha - traj.gamma) * np.einsum("ik,ik->k", u, w)))


def theoretical_variance(basis: StokesBasis, cfg: EstimatorConfig, nu: float, gamma: float,
                         T: float, eigenvalues: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Limit variance of ``N (nu_tilde - nu)``: ``(finite_N, idealized)``.

    ``finite_N`` uses the actual eigenvalues (or ``eigenvalues`` if given) in
    ``N^2 (T/2nu) sum lam^(1+4a-4g) / ((T/2nu) sum lam^(1+2a-2g))^2``;
    ``idealized`` is ``2 nu (a-g+1)^2 / (lambda_1 T (a-g+1/2))``.
    """
    a, g, N = cfg.alpha, gamma, cfg.N
    if a <= g - 0.5:
        raise ExponentOutOfRange(f"alpha={a} must exceed gamma - 1/2 = {g - 0.5}")
    lam = basis.eigenvalues[:N] if eigenvalues is None else np.asarray(eigenvalues, dtype=float)[:N]
    if len(lam) < N:
        raise ValueError(f"need {N} eigenvalues, have {len(lam)}")
    scale = T / (2.0 * nu)
    num = scale * float(np.sum(lam ** (1.0 + 4.0 * a - 4.0 * g)))
    den = scale * float(np.sum(lam ** (1.0 + 2.0 * a - 2.0 * g)))
    finite = N * N * num / (den * den)
    idealized = 2.0 * nu * (a - g + 1.0) ** 2 / (basis.lambda_1 * T * (a - g + 0.5))
    return finite, idealized


def predicted_std(basis: StokesBasis, cfg: EstimatorConfig, nu: float, gamma: float, T: float) -> float:
    """Standard deviation of the estimator itself, ``sqrt(finite_N) / N``."""
    return math.sqrt(theoretical_variance(basis, cfg, nu, gamma, T)[0]) / cfg.N

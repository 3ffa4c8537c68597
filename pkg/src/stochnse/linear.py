"""Exact simulation and moment oracles for the stochastic Stokes system.

Each mode is an Ornstein-Uhlenbeck process
``du_k + nu lambda_k u_k dt = lambda_k^-gamma dW_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import StokesBasis
from .errors import ExponentOutOfRange
from .noise import NoiseSpec, increment_path
from .trajectory import Trajectory


@dataclass(frozen=True)
class OuParams:
    nu: float
    lam: float
    gamma: float

    def __post_init__(self):
        if not (self.nu > 0 and self.lam > 0):
            raise ValueError("nu and lambda must be positive")


@dataclass(frozen=True)
class StepCoefficients:
    """Per-mode factors of one exponential step of length ``dt``."""

    decay: np.ndarray  # exp(-nu lam dt)
    phi: np.ndarray  # (1 - exp(-nu lam dt)) / (nu lam)
    noise: np.ndarray  # lam^-gamma sqrt((1 - exp(-2 nu lam dt)) / (2 nu lam))
    dt: float


def step_coefficients(eigenvalues: np.ndarray, nu: float, gamma: float, dt: float) -> StepCoefficients:
    rate = nu * np.asarray(eigenvalues, dtype=float)
    decay = np.exp(-rate * dt)
    phi = -np.expm1(-rate * dt) / rate
    spread = np.sqrt(-np.expm1(-2.0 * rate * dt) / (2.0 * rate))
    return StepCoefficients(decay, phi, np.asarray(eigenvalues) ** (-gamma) * spread, dt)


def ou_exact_step(p: OuParams, u: float, dt: float, xi: float) -> float:
    """Exact OU transition over ``dt`` driven by the standard normal ``xi``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    c = step_coefficients(np.array([p.lam]), p.nu, p.gamma, dt)
    return float(c.decay[0] * u + c.noise[0] * xi)


def linear_step(u: np.ndarray, xi: np.ndarray, coeffs: StepCoefficients) -> np.ndarray:
    return coeffs.decay * u + coeffs.noise * xi


def simulate_linear(basis: StokesBasis, noise: NoiseSpec, nu: float, T: float, dt: float,
                    replicate: int = 0, *, refine: int = 0, increments: np.ndarray | None = None,
                    zero_noise: bool = False) -> Trajectory:
    """All modes of ``basis`` advanced by exact OU transitions from zero."""
    n_steps = step_count(T, dt)
    m = len(basis)
    if increments is None:
        increments = (np.zeros((n_steps, m)) if zero_noise
                      else increment_path(noise, replicate, n_steps, dt, m, refine))
    coeffs = step_coefficients(basis.eigenvalues, nu, noise.gamma, dt)
    xi = increments / math.sqrt(dt)
    states = np.empty((n_steps + 1, m))
    states[0] = 0.0
    for i in range(n_steps):
        states[i + 1] = linear_step(states[i], xi[i], coeffs)
    times = np.arange(n_steps + 1) * dt
    config = {"nu": nu, "T": T, "dt": dt, "refine": refine, "nonlinear": False,
              "gamma": noise.gamma, "master_seed": noise.master_seed}
    return Trajectory(times, states, basis, noise.gamma, replicate, increments, None, config)


def simulate_linear_batch(eigenvalues: np.ndarray, noise: NoiseSpec, nu: float, T: float,
                          dt: float, replicates, refine: int = 0) -> np.ndarray:
    """Time integrals of u_k^2 (left Riemann sums) for many replicates at once.

    Returns shape ``(len(replicates), len(eigenvalues))``.  Uses the same keyed
    noise as :func:`simulate_linear`, so row ``r`` matches that replicate's path.
    """
    n_steps = step_count(T, dt)
    m = len(eigenvalues)
    coeffs = step_coefficients(eigenvalues, nu, noise.gamma, dt)
    paths = np.stack([increment_path(noise, r, n_steps, dt, m, refine) for r in replicates], axis=1)
    xi = paths / math.sqrt(dt)
    u = np.zeros((len(replicates), m))
    acc = np.zeros_like(u)
    for i in range(n_steps):
        acc += u * u
        u = linear_step(u, xi[i], coeffs)
    return acc * dt


def ou_time_integral_moments(p: OuParams, T: float) -> tuple[float, float]:
    """Exact mean and variance of ``int_0^T u^2 dt`` for the OU mode started at 0.

    The variance is ``2 int int c(s,t)^2`` for the Gaussian covariance
    ``c(s,t) = s2 (exp(-a|t-s|) - exp(-a(t+s)))`` with ``a = nu lam`` and
    ``s2 = lam^(-2 gamma) / (2a)``.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    a = p.nu * p.lam
    s2 = p.lam ** (-2.0 * p.gamma) / (2.0 * a)
    g = -math.expm1(-2.0 * a * T) / (2.0 * a)  # int_0^T exp(-2at) dt
    mean = s2 * (T - g)
    i_diff = (T - g) / a  # int int exp(-2a|t-s|)
    i_cross = (-math.expm1(-2.0 * a * T) - 2.0 * a * T * math.exp(-2.0 * a * T)) / (2.0 * a * a)
    i_sum = g * g  # int int exp(-2a(t+s))
    var = 2.0 * s2 * s2 * (i_diff - 2.0 * i_cross + i_sum)
    return mean, max(var, 0.0)


def ou_time_integral_asymptotic_mean(p: OuParams, T: float) -> float:
    """Large-eigenvalue form ``T lam^-(1+2 gamma) / (2 nu)``."""
    return T * p.lam ** (-(1.0 + 2.0 * p.gamma)) / (2.0 * p.nu)


def mode_integral_means(eigenvalues: np.ndarray, nu: float, gamma: float, T: float) -> np.ndarray:
    return np.array([ou_time_integral_moments(OuParams(nu, lam, gamma), T)[0] for lam in eigenvalues])


def linear_energy_growth(basis: StokesBasis, nu: float, gamma: float, T: float, beta: float,
                         N: int) -> float:
    """Exact ``E int_0^T |A^beta P_N Ubar|^2 dt`` for ``Ubar(0) = 0``."""
    if beta <= gamma:
        raise ExponentOutOfRange(f"beta={beta} must exceed gamma={gamma}")
    if not 1 <= N <= len(basis):
        raise ValueError(f"N={N} outside 1..{len(basis)}")
    lam = basis.eigenvalues[:N]
    return float(np.sum(lam ** (2.0 * beta) * mode_integral_means(lam, nu, gamma, T)))


def linear_energy_growth_asymptotic(lambda_1: float, nu: float, gamma: float, T: float,
                                    beta: float, N: int) -> float:
    """Idealised ``lambda_k = lambda_1 k`` growth law ``c N^(2 beta - 2 gamma)``."""
    e = 2.0 * beta - 2.0 * gamma
    return T * lambda_1 ** (e - 1.0) / (2.0 * nu * e) * N ** e


def step_count(T: float, dt: float) -> int:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ValueError(f"T/dt = {T / dt} is not a positive integer")
    return n

"""Pseudo-spectral stochastic Navier-Stokes solver in the real Stokes basis.

The nonlinear term uses the rotational form ``(U.grad)U = grad(|U|^2/2) +
omega (-U2, U1)``.  Projecting onto a divergence-free mode kills the gradient
part, so ``b_k = (omega U_perp, Phi_k)``: three inverse and two forward FFTs.
Grid arrays are indexed ``[n1, n2]`` with the real-FFT half along ``n1``,
matching the half lattice of the basis.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

from .basis import (COSINE, StokesBasis, TorusSpec, basis_for_grid, build_basis,
                    dealiased_cutoff, half_lattice, min_dealiased_grid)
from .errors import BlowUp, ConfigError, UnresolvedMode
from .linear import StepCoefficients, step_count, linear_step, step_coefficients
from .noise import NoiseSpec, increment_path
from .trajectory import Trajectory

BLOWUP_BOUND = 1e12


class PseudoSpectral:
    """Dealiased evaluator of ``P_M B(U)`` for states over a fixed basis."""

    def __init__(self, basis: StokesBasis, grid_n: Optional[int] = None):
        k_max = basis.max_component
        if grid_n is None:
            grid_n = min_dealiased_grid(k_max)
        if dealiased_cutoff(grid_n) < k_max:
            raise UnresolvedMode(
                f"grid {grid_n} cannot dealias wavevector component {k_max}; "
                f"need at least {3 * k_max + 1}")
        self.basis = basis
        self.n = n = grid_n
        L = basis.torus.L
        kappa = basis.torus.wavenumber
        self.shape = (n // 2 + 1, n)
        n1, n2 = basis.wavevectors[:, 0], basis.wavevectors[:, 1]
        self._pos = n1 * n + np.mod(n2, n)
        row0 = n1 == 0
        self._cos = basis.parity == COSINE
        # conjugate slots for n1 == 0, split by parity so no slot repeats within a scatter
        self._conj = [(np.flatnonzero(row0 & par), np.mod(-n2[row0 & par], n))
                      for par in (self._cos, ~self._cos)]
        c = math.sqrt(2.0) / L
        # velocity Fourier amplitude per unit coefficient: (c/2) e for cos, -(i c/2) e for sin
        z = np.where(self._cos, 0.5 * c + 0j, -0.5j * c)
        self._z1 = z * basis.orientation[:, 0]
        self._z2 = z * basis.orientation[:, 1]
        self._gather = c * L * L
        k1 = kappa * np.arange(n // 2 + 1)[:, None]
        k2 = kappa * scipy.fft.fftfreq(n, 1.0 / n)[None, :]
        self._ik1 = 1j * k1
        self._ik2 = 1j * k2
        # a field built on one wavevector depends on n.x only, so (U.grad)U = 0 exactly
        self._single = len(np.unique(basis.wavevectors, axis=0)) == 1

    def spectra(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Half-plane Fourier amplitudes of both velocity components."""
        state = np.asarray(state, dtype=float)
        lead = state.shape[:-1]
        m = state.shape[-1]
        if m != len(self.basis):
            raise ValueError(f"state has {m} modes, evaluator expects {len(self.basis)}")
        flat = state.reshape(-1, m)
        size = self.shape[0] * self.shape[1]
        out = []
        for z in (self._z1, self._z2):
            spec = np.zeros((flat.shape[0], size), dtype=complex)
            amp = flat * z
            # one cosine and one sine mode per wavevector: assign by parity, no duplicates
            spec[:, self._pos[self._cos]] = amp[:, self._cos]
            spec[:, self._pos[~self._cos]] += amp[:, ~self._cos]
            for modes, pos in self._conj:
                spec[:, pos] += np.conj(amp[:, modes])
            out.append(spec.reshape(lead + self.shape))
        return out[0], out[1]

    def velocity(self, state: np.ndarray) -> np.ndarray:
        """Velocity on the grid ``x_i = i L / n`` (origin at a corner), shape ``(..., 2, n, n)``."""
        u1h, u2h = self.spectra(state)
        return np.stack([self._to_grid(u1h), self._to_grid(u2h)], axis=-3)

    def _to_grid(self, spec: np.ndarray) -> np.ndarray:
        n = self.n
        return scipy.fft.irfftn(spec * (n * n), s=(n, n), axes=(-1, -2))

    def _from_grid(self, field_: np.ndarray) -> np.ndarray:
        n = self.n
        return scipy.fft.rfftn(field_, axes=(-1, -2)) / (n * n)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        if self._single:
            return np.zeros(np.shape(state))
        u1h, u2h = self.spectra(state)
        omega = self._to_grid(self._ik1 * u2h - self._ik2 * u1h)
        u1 = self._to_grid(u1h)
        u2 = self._to_grid(u2h)
        f1 = self._from_grid(-omega * u2)
        f2 = self._from_grid(omega * u1)
        lead = f1.shape[:-2]
        f1 = f1.reshape(lead + (-1,))[..., self._pos]
        f2 = f2.reshape(lead + (-1,))[..., self._pos]
        e1, e2 = self.basis.orientation[:, 0], self.basis.orientation[:, 1]
        proj = e1 * f1 + e2 * f2
        return self._gather * np.where(self._cos, proj.real, -proj.imag)


def nonlinear_term(basis: StokesBasis, state: np.ndarray, grid_n: Optional[int] = None) -> np.ndarray:
    """Galerkin coefficients ``b_k = (B(U), Phi_k)`` of the resolved state."""
    return PseudoSpectral(basis, grid_n)(state)


def sobolev_norm(basis: StokesBasis, state: np.ndarray, a: float) -> float:
    state = np.asarray(state, dtype=float)
    lam = basis.eigenvalues[: state.shape[-1]]
    return float(np.sqrt(np.sum(lam ** (2.0 * a) * state * state)))


@dataclass
class SolverConfig:
    nu: float
    noise: NoiseSpec
    torus: TorusSpec = field(default_factory=TorusSpec)
    grid_n: int = 64
    T: float = 1.0
    dt: float = 1e-3
    m_sim: Optional[int] = None
    u0: Optional[dict[int, float]] = None  # 0-based mode index -> amplitude
    track_residual: bool = False
    nonlinear: bool = True
    noise_refine: int = 0
    zero_noise: bool = False
    blowup_bound: float = BLOWUP_BOUND

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError("solver.nu", "viscosity must be positive")
        if not self.T > 0:
            raise ConfigError("solver.T", "horizon must be positive")
        if not self.dt > 0:
            raise ConfigError("solver.dt", "time step must be positive")
        try:
            step_count(self.T, self.dt)
        except ValueError as exc:
            raise ConfigError("solver.dt", str(exc)) from None
        if self.noise_refine < 0 or self.n_steps % (1 << self.noise_refine):
            raise ConfigError("solver.noise_refine", "2**noise_refine must divide T/dt")
        k_max = dealiased_cutoff(self.grid_n)
        if k_max < 1:
            raise ConfigError("solver.grid_n", "grid too small for 2/3 dealiasing")
        full = 2 * len(_disc(k_max))
        if self.m_sim is not None and not 1 <= self.m_sim <= full:
            raise ConfigError("solver.m_sim",
                              f"grid {self.grid_n} dealiases at most {full} modes, got {self.m_sim}")
        if self.u0:
            for k in self.u0:
                if not 0 <= int(k) < self.mode_count:
                    raise ConfigError("solver.u0", f"mode index {k} outside 0..{self.mode_count - 1}")

    @property
    def n_steps(self) -> int:
        return step_count(self.T, self.dt)

    @property
    def mode_count(self) -> int:
        if self.m_sim is not None:
            return self.m_sim
        return 2 * len(_disc(dealiased_cutoff(self.grid_n)))

    def basis(self) -> StokesBasis:
        if self.m_sim is None:
            return basis_for_grid(self.torus, self.grid_n)
        return build_basis(self.torus, self.m_sim)

    def initial_state(self) -> np.ndarray:
        u0 = np.zeros(self.mode_count)
        for k, amp in (self.u0 or {}).items():
            u0[int(k)] = float(amp)
        return u0

    def snapshot(self) -> dict:
        d = asdict(self)
        d["noise"] = asdict(self.noise)
        d["torus"] = asdict(self.torus)
        if self.u0:
            d["u0"] = {str(k): float(v) for k, v in sorted(self.u0.items())}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _disc(k_max: int) -> np.ndarray:
    return half_lattice(k_max * k_max)


def step_spde(state: np.ndarray, xi: np.ndarray, coeffs: StepCoefficients,
              b: Optional[np.ndarray] = None, *, step: int = 0,
              bound: float = BLOWUP_BOUND) -> np.ndarray:
    """One exponential Euler-Maruyama step.

    ``xi`` are standard normals (``dW / sqrt(dt)``); ``b`` the nonlinear
    coefficients at the left endpoint, or ``None`` for the linear system.
    """
    if b is None:
        new = linear_step(state, xi, coeffs)
    else:
        new = coeffs.decay * state - coeffs.phi * b + coeffs.noise * xi
    peak = float(np.max(np.abs(new))) if new.size else 0.0
    if not peak <= bound:
        raise BlowUp(step + 1, peak)
    return new


def simulate(config: SolverConfig, replicate: int = 0, *,
             increments: Optional[np.ndarray] = None) -> Trajectory:
    basis = config.basis()
    m = len(basis)
    n_steps = config.n_steps
    dt = config.dt
    if increments is None:
        if config.zero_noise:
            increments = np.zeros((n_steps, m))
        else:
            increments = increment_path(config.noise, replicate, n_steps, dt, m,
                                        config.noise_refine)
    coeffs = step_coefficients(basis.eigenvalues, config.nu, config.noise.gamma, dt)
    xi = increments / math.sqrt(dt)
    evaluator = PseudoSpectral(basis, config.grid_n) if config.nonlinear else None

    states = np.empty((n_steps + 1, m))
    states[0] = config.initial_state()
    linear = None
    if config.track_residual:
        linear = np.empty_like(states)
        linear[0] = 0.0
    for i in range(n_steps):
        b = evaluator(states[i]) if evaluator is not None else None
        states[i + 1] = step_spde(states[i], xi[i], coeffs, b, step=i, bound=config.blowup_bound)
        if linear is not None:
            linear[i + 1] = linear_step(linear[i], xi[i], coeffs)
    times = np.arange(n_steps + 1) * dt
    snap = config.snapshot()
    snap["config_hash"] = config.digest()
    return Trajectory(times, states, basis, config.noise.gamma, replicate, increments, linear, snap)

"""Divergence-free Fourier eigenbasis of the Stokes operator on the periodic torus.

Every mode is a real vector field ``c * e * cos(kappa n.x)`` or
``c * e * sin(kappa n.x)`` with ``kappa = 2 pi / L``, ``c = sqrt(2) / L`` and
``e = (-n2, n1) / |n|``.  Wavevectors are taken from the half lattice
``n1 > 0`` or ``n1 == 0, n2 > 0`` so that each real field appears once.
Mode indices are 0-based in the API.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnresolvedMode

COSINE = 0
SINE = 1
PARITY_NAMES = ("cos", "sin")


@dataclass(frozen=True)
class TorusSpec:
    """Square periodic domain ``[-L/2, L/2]^2``."""

    L: float = 2.0 * math.pi

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"period length must be positive, got {self.L}")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.L


@dataclass(frozen=True, eq=False)
class StokesBasis:
    torus: TorusSpec
    wavevectors: np.ndarray  # (M, 2) int
    parity: np.ndarray  # (M,) COSINE / SINE
    eigenvalues: np.ndarray  # (M,)
    orientation: np.ndarray  # (M, 2) unit, orthogonal to wavevector

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def lambda_1(self) -> float:
        return self.torus.wavenumber ** 2

    @property
    def max_component(self) -> int:
        return int(np.abs(self.wavevectors).max()) if len(self) else 0

    def truncate(self, m: int) -> "StokesBasis":
        """Basis of the first ``m`` modes (ordering is prefix-stable)."""
        if not 1 <= m <= len(self):
            raise ValueError(f"cannot truncate basis of {len(self)} modes to {m}")
        return StokesBasis(self.torus, self.wavevectors[:m], self.parity[:m],
                           self.eigenvalues[:m], self.orientation[:m])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(float(self.torus.L)).encode())
        h.update(np.ascontiguousarray(self.wavevectors, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.parity, dtype=np.int8).tobytes())
        return h.hexdigest()[:16]


def half_lattice(radius_sq: int) -> np.ndarray:
    r = math.isqrt(radius_sq)
    n1, n2 = np.meshgrid(np.arange(0, r + 1), np.arange(-r, r + 1), indexing="ij")
    n1, n2 = n1.ravel(), n2.ravel()
    keep = ((n1 > 0) | ((n1 == 0) & (n2 > 0))) & (n1 * n1 + n2 * n2 <= radius_sq)
    return np.stack([n1[keep], n2[keep]], axis=1)


def _from_wavevectors(torus: TorusSpec, vecs: np.ndarray) -> StokesBasis:
    m = len(vecs)
    wv = np.repeat(vecs, 2, axis=0)
    parity = np.tile(np.array([COSINE, SINE], dtype=np.int8), m)
    nsq = (wv ** 2).sum(axis=1)
    order = np.lexsort((parity, wv[:, 1], wv[:, 0], np.abs(wv).sum(axis=1), nsq))
    wv, parity, nsq = wv[order], parity[order], nsq[order]
    lam = torus.wavenumber ** 2 * nsq.astype(float)
    orient = np.stack([-wv[:, 1], wv[:, 0]], axis=1) / np.sqrt(nsq)[:, None]
    for a in (wv, parity, lam, orient):
        a.setflags(write=False)
    return StokesBasis(torus, wv, parity, lam, orient)


def build_basis(torus: TorusSpec, m_sim: int) -> StokesBasis:
    """First ``m_sim`` modes sorted by eigenvalue, ties by (|n1|+|n2|, n1, n2, parity)."""
    if m_sim < 1:
        raise ValueError("m_sim must be at least 1")
    # lattice points in a disc of radius^2 R: about pi R real modes
    radius_sq = max(2, int(m_sim / math.pi) + 2)
    # a full disc holds every mode below its radius, so its sorted prefix is global
    vecs = half_lattice(radius_sq)
    while 2 * len(vecs) < m_sim:
        radius_sq *= 2
        vecs = half_lattice(radius_sq)
    return _from_wavevectors(torus, vecs).truncate(m_sim)


def basis_for_grid(torus: TorusSpec, grid_n: int) -> StokesBasis:
    """All modes with ``|n| <= K`` where ``K`` is the largest 2/3-dealiased component."""
    k_max = dealiased_cutoff(grid_n)
    if k_max < 1:
        raise UnresolvedMode(f"grid of size {grid_n} resolves no dealiased modes")
    return _from_wavevectors(torus, half_lattice(k_max * k_max))


def dealiased_cutoff(grid_n: int) -> int:
    """Largest K with grid_n > 3K, so quadratic products alias outside |n_i| <= K."""
    return (grid_n - 1) // 3


def min_dealiased_grid(k_max: int) -> int:
    """Smallest even grid size that dealiases products of modes with |n_i| <= k_max."""
    n = 3 * k_max + 1
    return n + (n % 2)


def eval_eigenfunction(basis: StokesBasis, k: int, n: int) -> np.ndarray:
    """Sample mode ``k`` on the ``n x n`` grid ``x_i = -L/2 + i L / n``.

    Returns an array of shape ``(2, n, n)`` indexed ``[component, i1, i2]``.
    """
    wv = basis.wavevectors[k]
    if n <= 2 * int(np.abs(wv).max()):
        raise UnresolvedMode(f"grid {n} does not resolve wavevector {tuple(wv)}")
    L = basis.torus.L
    x = -L / 2 + L * np.arange(n) / n
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    phase = basis.torus.wavenumber * (wv[0] * x1 + wv[1] * x2)
    profile = np.cos(phase) if basis.parity[k] == COSINE else np.sin(phase)
    c = math.sqrt(2.0) / L
    return c * basis.orientation[k][:, None, None] * profile[None]


def grid_inner(basis: StokesBasis, f: np.ndarray, g: np.ndarray) -> float:
    """Discrete L2 inner product of two sampled vector fields (rectangle rule)."""
    n = f.shape[-1]
    h = basis.torus.L / n
    return float((f * g).sum() * h * h)


def apply_fractional_power(basis: StokesBasis, a: float, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    m = state.shape[-1]
    if m > len(basis):
        raise ValueError(f"state has {m} modes, basis only {len(basis)}")
    return state * basis.eigenvalues[:m] ** a


def project(state: np.ndarray, N: int) -> np.ndarray:
    """Galerkin projection onto the first ``N`` modes."""
    state = np.asarray(state, dtype=float)
    if not 1 <= N <= state.shape[-1]:
        raise ValueError(f"N={N} outside 1..{state.shape[-1]}")
    out = state.copy()
    out[..., N:] = 0.0
    return out


def project_complement(state: np.ndarray, N: int) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    return state - project(state, N)

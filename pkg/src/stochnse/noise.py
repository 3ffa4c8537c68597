"""Counter-keyed Brownian increments and their spectral colouring.

Each standard normal draw is a pure function of ``(master_seed, replicate,
step, level, mode)``: the Philox key carries ``(seed, replicate)`` and the
high counter words carry ``(step, level)``, so streams never overlap and
replicates can be generated in any order.  Mode ``k`` of a block is the
``k``-th draw of its stream, which makes the draws for the first ``m`` modes
independent of how many modes are requested.

``level`` > 0 streams feed a dyadic Brownian-bridge refinement, so a path
sampled with step ``dt / 2**r`` sums pairwise to the path sampled with ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import StokesBasis

_U64 = 2 ** 64


@dataclass(frozen=True)
class NoiseSpec:
    gamma: float
    master_seed: int = 0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not 0 <= self.master_seed < _U64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class NoiseIncrementBlock:
    step: int
    dt: float
    increments: np.ndarray  # (mode_count,) Brownian increments, variance dt

    @property
    def mode_count(self) -> int:
        return len(self.increments)


class _Stream:
    """Philox generator for one ``(seed, replicate)`` key, repositioned per block.

    Resetting the counter is much cheaper than constructing a new generator
    and yields exactly the same draws.
    """

    def __init__(self, spec: NoiseSpec, replicate: int):
        self._key = np.array([spec.master_seed, replicate % _U64], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=self._key)
        self._gen = np.random.Generator(self._bitgen)

    def normals(self, step: int, level: int, count: int) -> np.ndarray:
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, step, level], dtype=np.uint64), "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64), "buffer_pos": 4,
            "has_uint32": 0, "uinteger": 0}
        return self._gen.standard_normal(count)


def _normals(spec: NoiseSpec, replicate: int, step: int, level: int, count: int) -> np.ndarray:
    return _Stream(spec, replicate).normals(step, level, count)


def sample_increments(spec: NoiseSpec, replicate: int, step: int, dt: float,
                      mode_count: int) -> NoiseIncrementBlock:
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = _normals(spec, replicate, step, 0, mode_count)
    return NoiseIncrementBlock(step, dt, math.sqrt(dt) * xi)


def increment_path(spec: NoiseSpec, replicate: int, n_steps: int, dt: float,
                   mode_count: int, refine: int = 0) -> np.ndarray:
    """Brownian increments of shape ``(n_steps, mode_count)`` with step ``dt``.

    The path is keyed on the coarse grid of step ``dt * 2**refine`` and
    bridged down ``refine`` times.
    """
    if refine < 0:
        raise ValueError("refine must be non-negative")
    factor = 1 << refine
    if n_steps % factor:
        raise ValueError(f"n_steps={n_steps} not divisible by 2**refine={factor}")
    coarse_dt = dt * factor
    n_coarse = n_steps // factor
    stream = _Stream(spec, replicate)
    path = np.empty((n_coarse, mode_count))
    for j in range(n_coarse):
        path[j] = stream.normals(j, 0, mode_count)
    path *= math.sqrt(coarse_dt)
    h = coarse_dt
    for level in range(1, refine + 1):
        # halves of an increment dW over h: dW/2 +- N(0, h/4), independent of dW
        eta = np.empty_like(path)
        for j in range(len(path)):
            eta[j] = stream.normals(j, level, mode_count)
        eta *= math.sqrt(h / 4.0)
        fine = np.empty((2 * len(path), mode_count))
        fine[0::2] = 0.5 * path + eta
        fine[1::2] = 0.5 * path - eta
        path, h = fine, h / 2.0
    return path


def color(spec: NoiseSpec, basis: StokesBasis, block) -> np.ndarray:
    """Apply the covariance ``sigma Phi_k = lambda_k^-gamma Phi_k`` to raw increments.

    ``block`` may be a :class:`NoiseIncrementBlock` or an array whose last
    axis runs over modes.
    """
    inc = block.increments if isinstance(block, NoiseIncrementBlock) else np.asarray(block)
    m = inc.shape[-1]
    if m > len(basis):
        raise ValueError(f"block has {m} modes, basis only {len(basis)}")
    return inc * basis.eigenvalues[:m] ** (-spec.gamma)

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .basis import StokesBasis


@dataclass(eq=False)
class Trajectory:
    """Spectral sample path on the uniform grid ``times`` plus the noise it consumed.

    ``increments[i]`` is the raw Brownian increment ``W(t_{i+1}) - W(t_i)``
    per mode (uncoloured).  ``linear_states`` holds the co-evolved linear
    Stokes solution when residual tracking is on.
    """

    times: np.ndarray
    states: np.ndarray
    basis: StokesBasis
    gamma: float
    replicate: int = 0
    increments: Optional[np.ndarray] = None
    linear_states: Optional[np.ndarray] = None
    config: dict[str, Any] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def mode_count(self) -> int:
        return self.states.shape[1]

    @property
    def residual(self) -> Optional[np.ndarray]:
        if self.linear_states is None:
            return None
        return self.states - self.linear_states

    def subsample(self, stride: int) -> "Trajectory":
        """Observation of every ``stride``-th state; noise increments are summed."""
        if stride == 1:
            return self
        if stride < 1 or self.n_steps % stride:
            raise ValueError(f"stride {stride} does not divide {self.n_steps} steps")
        inc = None
        if self.increments is not None:
            inc = self.increments.reshape(-1, stride, self.mode_count).sum(axis=1)
        lin = None if self.linear_states is None else self.linear_states[::stride]
        return Trajectory(self.times[::stride], self.states[::stride], self.basis,
                          self.gamma, self.replicate, inc, lin, dict(self.config))

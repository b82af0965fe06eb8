"""Linear DDPM noise schedule and the forward (noising) process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray  # betas[t - 1] for t = 1..T

    def __post_init__(self):
        b = np.array(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if not (np.all(b > 0) and np.all(b < 1) and np.all(np.diff(b) >= 0)):
            raise ValueError("betas must be non-decreasing within (0, 1)")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - b)])
        ab.setflags(write=False)
        object.__setattr__(self, "_alpha_bars", ab)

    @classmethod
    def linear(cls, steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2):
        return cls(np.linspace(beta_start, beta_end, steps))

    @property
    def steps(self) -> int:
        return self.betas.size

    @property
    def alpha_bars(self) -> np.ndarray:
        """alpha_bar[t] for t = 0..T, with alpha_bar[0] = 1."""
        return self._alpha_bars

    def alpha_bar(self, t) -> np.ndarray:
        return self._alpha_bars[np.asarray(t)]


def add_noise(z0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps; t = 0 returns z0."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ShapeMismatch(f"z0 {z0.shape} vs eps {eps.shape}")
    if not 0 <= t <= sched.steps:
        raise ValueError(f"t must lie in [0, {sched.steps}], got {t}")
    ab = float(sched.alpha_bars[t])
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps

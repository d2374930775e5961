"""Monte Carlo probability estimates with 95% confidence half-widths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["ProbabilityEstimate", "Z95"]

Z95 = 1.96


@dataclass(frozen=True)
class ProbabilityEstimate:
    """A probability estimate, its 95% half-width and the number of trials behind it."""

    p_hat: float
    half_width_95: float
    trials_total: int

    @classmethod
    def from_counts(cls, hits: int, trials: int) -> ProbabilityEstimate:
        """Binomial estimate: ``hits / trials`` with half-width ``1.96 sqrt(p(1-p)/N)``."""
        if trials < 1:
            raise DomainError("trials must be >= 1")
        if not 0 <= hits <= trials:
            raise DomainError("hits must lie in [0, trials]")
        p = hits / trials
        return cls(p, Z95 * math.sqrt(p * (1.0 - p) / trials), int(trials))

    @classmethod
    def from_samples(cls, values: np.ndarray) -> ProbabilityEstimate:
        """Mean of i.i.d. per-trial values with a normal-theory half-width."""
        values = np.asarray(values, dtype=np.float64)
        if values.size < 1:
            raise DomainError("need at least one sample")
        mean = float(values.mean())
        spread = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return cls(mean, Z95 * spread / math.sqrt(values.size), int(values.size))

    @property
    def low(self) -> float:
        return self.p_hat - self.half_width_95

    @property
    def high(self) -> float:
        return self.p_hat + self.half_width_95

    def overlaps(self, other: ProbabilityEstimate) -> bool:
        """Whether the two 95% intervals intersect."""
        return self.low <= other.high and other.low <= self.high

    def covers(self, value: float) -> bool:
        return self.low <= value <= self.high

"""Large-n approximations for the probability of selecting one fixed action.

Setting: ``n`` embeddings drawn uniformly on the sphere plus one extra action
whose embedding has inner product ``dot_va`` with the state. The zero-order
value is the vMF density at that embedding times the sphere area over ``n``;
the first-order value corrects it by the expected gap between the state and
its nearest neighbour. For ``d = 2`` an almost exact estimator integrates the
von Mises density over the anchor's Voronoi arc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .estimate import ProbabilityEstimate
from .specfn import log_bessel_i, log_beta, log_gamma, log_vmf_normalizer, sphere_surface_area
from .sphere import RandomSource, _generator

__all__ = [
    "AsymptoticInput",
    "p0",
    "p1",
    "expected_max_dot",
    "max_dot_scale",
    "exact_2d_vmf_prob",
]


@dataclass(frozen=True)
class AsymptoticInput:
    """Set size, dimension, concentration and anchor inner product."""

    n: int
    d: int
    kappa: float
    dot_va: float

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n!r}")
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 2:
            raise DomainError(f"d must be an integer >= 2, got {self.d!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not -1.0 <= self.dot_va <= 1.0:
            raise DomainError(f"dot_va must lie in [-1, 1], got {self.dot_va!r}")


def p0(inp: AsymptoticInput) -> float:
    """Zero-order selection probability: vMF density at the anchor times area over ``n``."""
    log_p = (
        log_vmf_normalizer(inp.d, inp.kappa)
        + inp.kappa * inp.dot_va
        + sphere_surface_area(inp.d).log_magnitude
        - math.log(inp.n)
    )
    return math.exp(log_p)


def max_dot_scale(n: int, d: int) -> float:
    """Leading-order gap ``1 - E[max_i <v, x_i>]`` for ``n`` uniform points, ``d >= 3``.

    Equals ``Gamma((d+1)/(d-1)) / 2 * ((d-1) B(1/2, (d-1)/2) / n) ** (2/(d-1))``.
    """
    if isinstance(d, bool) or int(d) != d or d < 3:
        raise DomainError(f"d must be an integer >= 3, got {d!r}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    power = 2.0 / (d - 1)
    log_inner = math.log(d - 1) + log_beta(0.5, 0.5 * (d - 1)) - math.log(n)
    return 0.5 * math.exp(log_gamma((d + 1) / (d - 1)) + power * log_inner)


def p1(inp: AsymptoticInput) -> float:
    """First-order selection probability, ``p0 * (1 - kappa * dot_va * gap)``; needs ``d >= 3``."""
    if inp.d < 3:
        raise DomainError("the first-order approximation needs d >= 3")
    return p0(inp) * (1.0 - inp.kappa * inp.dot_va * max_dot_scale(inp.n, inp.d))


def expected_max_dot(n: int, d: int) -> float:
    """Leading-order expected largest inner product between a fixed point and ``n`` uniform points."""
    return 1.0 - max_dot_scale(n, d)


# ---------------------------------------------------------------------------
# d = 2


_GL_LOW = np.polynomial.legendre.leggauss(12)
_GL_HIGH = np.polynomial.legendre.leggauss(24)


def _gl(func, lo: np.ndarray, hi: np.ndarray, rule) -> np.ndarray:
    nodes, weights = rule
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (func(pts) @ weights)


def _adaptive_gl(func, lo: np.ndarray, hi: np.ndarray, tol: float, depth: int = 40) -> np.ndarray:
    """Vectorized adaptive Gauss-Legendre: bisect any interval whose 12/24-point rules disagree."""
    coarse = _gl(func, lo, hi, _GL_LOW)
    fine = _gl(func, lo, hi, _GL_HIGH)
    bad = np.abs(fine - coarse) > tol
    if depth == 0 or not np.any(bad):
        return fine
    mid = 0.5 * (lo[bad] + hi[bad])
    fine[bad] = (_adaptive_gl(func, lo[bad], mid, 0.5 * tol, depth - 1)
                 + _adaptive_gl(func, mid, hi[bad], 0.5 * tol, depth - 1))
    return fine


def exact_2d_vmf_prob(kappa: float, theta0: float, n: int, trials: int, rng: RandomSource | np.random.Generator,
                      *, control_variate: bool = True, tol: float = 1e-10) -> ProbabilityEstimate:
    """Selection probability of the anchor on the circle by integrating over its Voronoi arc.

    The anchor sits at angle 0 and the state at angle ``-theta0``. Each trial
    draws the smallest and largest of ``n`` uniform angles on ``[0, 2 pi)``;
    the anchor's cell is the arc between the two bisectors, and the von Mises
    density centred on the state is integrated over it.

    With ``control_variate`` the density at the anchor times the arc length
    is subtracted and its known mean ``f(theta0) 2 pi / (n + 1)`` added back,
    which leaves the estimator unbiased and removes most of the spread caused
    by the random arc length.
    """
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be an integer >= 1, got {trials!r}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    if not -math.pi <= theta0 <= math.pi:
        raise DomainError(f"theta0 must lie in [-pi, pi], got {theta0!r}")
    gen = _generator(rng)
    two_pi = 2.0 * math.pi
    log_norm = -math.log(two_pi) - log_bessel_i(0.0, kappa)
    f0 = math.exp(log_norm + kappa * math.cos(theta0))

    values = np.empty(int(trials))
    block = 1 << 16
    for start in range(0, int(trials), block):
        m = min(block, int(trials) - start)
        # joint law of (min, max): max first, then the min of the other n-1 below it
        largest = two_pi * np.exp(np.log(gen.random(m)) / n)
        if n > 1:
            smallest = largest * -np.expm1(np.log(gen.random(m)) / (n - 1))
        else:
            smallest = largest.copy()
        lo = theta0 + 0.5 * (largest - two_pi)
        hi = theta0 + 0.5 * smallest
        if control_variate:
            # f(theta) - f(theta0), written to avoid cancellation near theta0
            def integrand(theta: np.ndarray) -> np.ndarray:
                gap = -2.0 * np.sin(0.5 * (theta + theta0)) * np.sin(0.5 * (theta - theta0))
                return f0 * np.expm1(kappa * gap)

            residual = _adaptive_gl(integrand, lo, hi, tol)
            values[start:start + m] = residual + f0 * two_pi / (n + 1)
        else:
            values[start:start + m] = _adaptive_gl(lambda th: np.exp(log_norm + kappa * np.cos(th)), lo, hi, tol)
    return ProbabilityEstimate.from_samples(values)

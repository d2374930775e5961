"""The von Mises-Fisher law on the unit sphere.

Sampling splits a draw into its radial coordinate ``t = <mu, x>`` and a
uniformly distributed tangent direction. The radial coordinate is drawn by
Wood's beta-envelope rejection scheme, which never looks at any action set,
so the cost of a draw depends only on the dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import ConcentrationOverflowError, DegenerateTangentError, DomainError
from .specfn import log_bessel_i, log_beta, log_gamma, log_vmf_normalizer
from .sphere import (
    RandomSource,
    UnitVector,
    _generator,
    as_unit_array,
    compose_radial_tangent,
    sample_uniform_sphere,
    tangent_component,
)

__all__ = [
    "VmfParams",
    "RadialLaw",
    "log_density",
    "density",
    "radial_log_pdf",
    "radial_cdf",
    "radial_cdf_sorted",
    "sample_radial",
    "radial_batch",
    "wood_acceptance",
    "sample",
    "sample_batch",
    "sample_around",
    "estimate_kappa",
]

Rng = RandomSource | np.random.Generator


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    return kappa


@dataclass(frozen=True)
class VmfParams:
    """Mean direction and concentration of a von Mises-Fisher law."""

    mean_direction: UnitVector
    kappa: float

    def __post_init__(self) -> None:
        if not isinstance(self.mean_direction, UnitVector):
            object.__setattr__(self, "mean_direction", UnitVector(self.mean_direction))
        object.__setattr__(self, "kappa", _check_kappa(self.kappa))

    @property
    def d(self) -> int:
        return self.mean_direction.d

    @cached_property
    def log_normalizer(self) -> float:
        return log_vmf_normalizer(self.d, self.kappa)

    @property
    def radial(self) -> RadialLaw:
        return RadialLaw(self.kappa, self.d)


@dataclass(frozen=True)
class RadialLaw:
    """Law of ``<mu, x>`` when ``x`` follows a von Mises-Fisher law with mean ``mu``."""

    kappa: float
    d: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", _check_kappa(self.kappa))
        d = self.d
        if isinstance(d, bool) or int(d) != d or d < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
        object.__setattr__(self, "d", int(d))

    @property
    def exponent(self) -> float:
        """Power of ``1 - t^2`` in the density."""
        return 0.5 * (self.d - 3)

    @cached_property
    def log_constant(self) -> float:
        d, kappa = self.d, self.kappa
        if kappa == 0.0:
            return -log_beta(0.5, 0.5 * (d - 1))
        nu = 0.5 * d - 1.0
        return (
            nu * (math.log(kappa) - math.log(2.0))
            - log_gamma(0.5)
            - log_gamma(0.5 * (d - 1))
            - log_bessel_i(nu, kappa)
        )

    @cached_property
    def _wood(self) -> tuple[float, float, float]:
        dm1 = self.d - 1.0
        kappa = self.kappa
        b = dm1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + dm1 * dm1))
        x0 = (1.0 - b) / (1.0 + b)
        log_one_minus_x0_sq = math.log(4.0 * b) - 2.0 * math.log1p(b)
        return b, x0, log_one_minus_x0_sq


def log_density(params: VmfParams, x: UnitVector | np.ndarray) -> float | np.ndarray:
    """Log density at ``x`` (a unit vector or rows of unit vectors)."""
    arr = as_unit_array(x, params.d)
    return params.log_normalizer + params.kappa * (arr @ params.mean_direction.coords)


def density(params: VmfParams, x: UnitVector | np.ndarray) -> float | np.ndarray:
    """Density at ``x``; prefer :func:`log_density` when kappa is large."""
    return np.exp(log_density(params, x))


def radial_log_pdf(law: RadialLaw, t: float | np.ndarray) -> float | np.ndarray:
    """Log density of the radial coordinate at ``t`` in ``[-1, 1]``.

    At the endpoints the result is ``+inf`` for ``d = 2`` and ``-inf`` for
    ``d >= 4``.
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0) or np.any(np.isnan(arr)):
        raise DomainError("radial coordinate must lie in [-1, 1]")
    expo = law.exponent
    with np.errstate(divide="ignore"):
        if expo == 0.0:
            shape = np.zeros_like(arr)
        else:
            shape = expo * (np.log1p(-arr) + np.log1p(arr))
    out = law.log_constant + law.kappa * arr + shape
    return float(out) if np.ndim(out) == 0 else out


def _smooth_part(s: np.ndarray | float, law: RadialLaw, drop: str) -> np.ndarray | float:
    # density with the (1 - s)^a or (1 + s)^a factor removed; quad supplies it as a weight
    expo = law.exponent
    base = law.log_constant + law.kappa * s
    if drop == "upper":
        base = base + expo * np.log1p(s)
    else:
        base = base + expo * np.log1p(-s)
    return np.exp(base)


def _pdf_scalar(s: float, law: RadialLaw) -> float:
    return math.exp(radial_log_pdf(law, s))


def _mode_and_scale(law: RadialLaw) -> tuple[float, float]:
    """Mode of the radial density and the width of its peak."""
    a = law.exponent
    kappa = law.kappa
    if a <= 0.0:
        return (1.0, 1.0 / kappa) if kappa > 0.0 else (0.0, 1.0)
    mode = (math.sqrt(a * a + kappa * kappa) - a) / kappa if kappa > 0.0 else 0.0
    curvature = 2.0 * a * (1.0 + mode * mode) / (1.0 - mode * mode) ** 2
    return mode, 1.0 / math.sqrt(curvature)


def _mass(law: RadialLaw, lo: float, hi: float) -> float:
    """Integral of the radial density over ``[lo, hi]``."""
    if hi <= lo:
        return 0.0
    mode, scale = _mode_and_scale(law)
    cuts = {mode + k * scale for k in (-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0)}
    edges = [lo] + sorted(c for c in cuts if lo < c < hi) + [hi]
    singular = law.exponent < 1.0
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if singular and a == -1.0:
            val, _ = integrate.quad(
                _smooth_part, a, b, args=(law, "lower"), weight="alg", wvar=(law.exponent, 0.0),
                epsabs=1e-14, epsrel=1e-12, limit=200,
            )
        elif singular and b == 1.0:
            val, _ = integrate.quad(
                _smooth_part, a, b, args=(law, "upper"), weight="alg", wvar=(0.0, law.exponent),
                epsabs=1e-14, epsrel=1e-12, limit=200,
            )
        else:
            val, _ = integrate.quad(_pdf_scalar, a, b, args=(law,), epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def _lower_mass(law: RadialLaw, t: float) -> float:
    """Integral of the density over ``[-1, t]``."""
    return _mass(law, -1.0, t)


def _upper_mass(law: RadialLaw, t: float) -> float:
    """Integral of the density over ``[t, 1]``."""
    return _mass(law, t, 1.0)


def radial_cdf(law: RadialLaw, t: float) -> float:
    """``P(<mu, x> <= t)`` computed by adaptive quadrature."""
    t = float(t)
    if not (-1.0 <= t <= 1.0):
        raise DomainError(f"radial coordinate must lie in [-1, 1], got {t!r}")
    if t == -1.0:
        return 0.0
    if t == 1.0:
        return 1.0
    mode, _ = _mode_and_scale(law)
    if t <= mode:
        value = _lower_mass(law, t)
    else:
        value = 1.0 - _upper_mass(law, t)
    return min(1.0, max(0.0, value))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _gl_angle_integrand(law: RadialLaw, theta: np.ndarray) -> np.ndarray:
    # radial density in the angle: f(cos theta) sin theta, with 1 - t^2 = sin^2 theta
    with np.errstate(divide="ignore", invalid="ignore"):
        log_sin = np.log(np.sin(theta))
        vals = np.exp(law.log_constant + law.kappa * np.cos(theta) + (2.0 * law.exponent + 1.0) * log_sin)
    return np.where(np.isfinite(vals), vals, 0.0)


def _gl_angle(law: RadialLaw, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """24-point Gauss-Legendre mass between angles ``a <= b``, vectorised over gaps."""
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (_gl_angle_integrand(law, nodes) @ _GL_WEIGHTS)


def radial_cdf_sorted(law: RadialLaw, ts: np.ndarray) -> np.ndarray:
    """Radial CDF at many sorted points.

    The two end pieces are integrated adaptively and every interior gap with
    a 24-point Gauss-Legendre rule in the angle ``arccos t``, where the
    integrand stays smooth up to the poles even for ``d = 2``; the pieces are
    then accumulated from the side that carries less mass.
    """
    ts = np.asarray(ts, dtype=np.float64)
    if ts.ndim != 1 or np.any(np.diff(ts) < 0):
        raise DomainError("points must be a sorted 1-D array")
    if ts.size == 0:
        return ts.copy()
    if ts[0] < -1.0 or ts[-1] > 1.0:
        raise DomainError("radial coordinate must lie in [-1, 1]")
    # angles run the other way: theta(lo) > theta(hi)
    lo, hi = np.arccos(ts[:-1]), np.arccos(ts[1:])
    gaps = _gl_angle(law, hi, lo)
    mid = 0.5 * (lo + hi)
    halves = _gl_angle(law, hi, mid) + _gl_angle(law, mid, lo)
    # a peaked density inside a wide gap defeats one fixed rule; those gaps go to quad
    for i in np.flatnonzero(np.abs(gaps - halves) > 1e-13):
        gaps[i], _ = integrate.quad(lambda th: float(_gl_angle_integrand(law, np.asarray(th))), hi[i], lo[i],
                                    epsabs=1e-14, epsrel=1e-12, limit=200)
    mode, _ = _mode_and_scale(law)
    if ts[-1] <= mode or (ts[0] <= mode and mode - ts[0] > ts[-1] - mode):
        head = _lower_mass(law, ts[0])
        return np.minimum(1.0, head + np.concatenate([[0.0], np.cumsum(gaps)]))
    tail = _upper_mass(law, ts[-1]) + np.concatenate([np.cumsum(gaps[::-1])[::-1], [0.0]])
    return np.maximum(0.0, 1.0 - tail)


def wood_acceptance(law: RadialLaw, draws: int, rng: Rng) -> float:
    """Empirical acceptance rate of the rejection envelope over ``draws`` proposals."""
    _, accept = _wood_propose(law, draws, _generator(rng))
    return float(np.mean(accept))


def _wood_propose(law: RadialLaw, size: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    b, x0, log_one_minus_x0_sq = law._wood
    dm1 = law.d - 1.0
    z = gen.beta(0.5 * dm1, 0.5 * dm1, size)
    u = gen.random(size)
    # w = (1 - (1+b) z) / (1 - (1-b) z), written to keep precision when w is near 1
    denom = (1.0 - z) + b * z
    w = 1.0 - 2.0 * b * z / denom
    log_ratio = law.kappa * (w - x0) + dm1 * (np.log1p(-x0 * w) - log_one_minus_x0_sq)
    with np.errstate(divide="ignore"):
        accept = log_ratio >= np.log(u)
    return w, accept


def radial_batch(law: RadialLaw, size: int, rng: Rng) -> np.ndarray:
    """``size`` independent draws of the radial coordinate."""
    gen = _generator(rng)
    size = int(size)
    d = law.d
    if law.kappa == 0.0:
        if d == 3:
            return 2.0 * gen.random(size) - 1.0
        half = 0.5 * (d - 1)
        return 2.0 * gen.beta(half, half, size) - 1.0
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        w, accept = _wood_propose(law, need + need // 2 + 16, gen)
        got = w[accept][:need]
        out[filled:filled + got.size] = got
        filled += got.size
    return out


def sample_radial(law: RadialLaw, rng: Rng) -> float:
    """One draw of the radial coordinate."""
    return float(radial_batch(law, 1, rng)[0])


def sample(params: VmfParams, rng: Rng) -> UnitVector:
    """One von Mises-Fisher draw, built from a radial draw and a uniform tangent."""
    v = params.mean_direction
    t = sample_radial(params.radial, rng)
    while True:
        try:
            tangent = tangent_component(v, sample_uniform_sphere(params.d, rng))
            break
        except DegenerateTangentError:
            continue
    return compose_radial_tangent(v, t, tangent)


def sample_batch(params: VmfParams, size: int, rng: Rng) -> np.ndarray:
    """``size`` von Mises-Fisher draws as rows of a float64 array."""
    gen = _generator(rng)
    v = params.mean_direction.coords
    d = params.d
    t = radial_batch(params.radial, size, gen)
    # projecting an isotropic Gaussian and normalizing gives a uniform tangent,
    # so the intermediate normalization onto the sphere is skipped
    u = gen.standard_normal((size, d))
    u -= np.outer(u @ v, v)
    norms = np.sqrt(np.einsum("ij,ij->i", u, u))
    bad = norms <= 1e-12
    while np.any(bad):
        idx = np.flatnonzero(bad)
        redo = gen.standard_normal((idx.size, d))
        redo -= np.outer(redo @ v, v)
        u[idx] = redo
        norms[idx] = np.linalg.norm(redo, axis=1)
        bad = norms <= 1e-12
    # one division folds the tangent normalization into the radial scale
    scale = np.sqrt(np.maximum(0.0, (1.0 - t) * (1.0 + t))) / norms
    u *= scale[:, None]
    u += np.outer(t, v)
    return u


def sample_around(means: np.ndarray, kappa: float, rng: Rng) -> np.ndarray:
    """One draw per row of ``means``, each from the vMF law centred on that row."""
    gen = _generator(rng)
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    m, d = means.shape
    t = radial_batch(RadialLaw(kappa, d), m, gen)
    u = gen.standard_normal((m, d))
    u -= np.einsum("ij,ij->i", u, means)[:, None] * means
    norms = np.linalg.norm(u, axis=1)
    bad = norms <= 1e-12
    while np.any(bad):
        idx = np.flatnonzero(bad)
        redo = gen.standard_normal((idx.size, d))
        redo -= np.einsum("ij,ij->i", redo, means[idx])[:, None] * means[idx]
        u[idx] = redo
        norms[idx] = np.linalg.norm(redo, axis=1)
        bad = norms <= 1e-12
    u /= norms[:, None]
    u -= np.einsum("ij,ij->i", u, means)[:, None] * means
    u *= np.sqrt(np.maximum(0.0, (1.0 - t) * (1.0 + t)))[:, None]
    u += t[:, None] * means
    return u


def estimate_kappa(samples: Sequence[UnitVector] | np.ndarray) -> float:
    """Closed-form concentration estimate ``R (d - R^2) / (1 - R^2)``.

    ``R`` is the length of the mean of the samples.

    Raises
    ------
    ConcentrationOverflowError
        When ``R >= 1 - 1e-12`` and the estimate diverges.
    """
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.float64)
    else:
        dims = {s.d for s in samples}
        if len(dims) > 1:
            raise DomainError("samples must share a dimension")
        arr = np.array([s.coords for s in samples]) if samples else np.empty((0, 2))
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise DomainError("estimate_kappa needs at least two samples")
    d = arr.shape[1]
    r = float(np.linalg.norm(arr.mean(axis=0)))
    if r >= 1.0 - 1e-12:
        raise ConcentrationOverflowError(f"mean resultant length {r!r} is too close to 1")
    if r <= 1e-12:
        return 0.0
    return r * (d - r * r) / (1.0 - r * r)

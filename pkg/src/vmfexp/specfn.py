"""Log-domain special functions used by the von Mises-Fisher machinery.

Everything here works on logarithms so that normalizers stay finite for
concentrations up to several hundred and dimensions up to a few hundred,
where the raw Bessel function or the Gamma function would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError

__all__ = [
    "LogValue",
    "log_gamma",
    "log_beta",
    "log_bessel_i",
    "sphere_surface_area",
    "log_vmf_normalizer",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Stirling series coefficients B_{2k} / (2k (2k - 1)) for k = 1..8
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
_STIRLING_MIN = 15.0


@dataclass(frozen=True)
class LogValue:
    """A positive quantity stored by its natural logarithm."""

    log_magnitude: float

    @property
    def value(self) -> float:
        """The quantity itself; may overflow to ``inf`` for huge magnitudes."""
        try:
            return math.exp(self.log_magnitude)
        except OverflowError:
            return math.inf


def log_gamma(z: float) -> float:
    """Natural log of the Gamma function for real ``z > 0``.

    Uses upward recurrence to ``z >= 15`` followed by the Stirling series,
    which is accurate to a few ulps there.
    """
    z = float(z)
    if not math.isfinite(z) or z <= 0.0:
        raise DomainError(f"log_gamma requires a finite z > 0, got {z!r}")
    if z.is_integer() and z <= 171.0:
        return math.log(math.factorial(int(z) - 1))
    shift = 0.0
    if z < _STIRLING_MIN:
        # product z (z+1) ... (z+k-1), kept in a few partial products to avoid overflow
        prod = 1.0
        while z < _STIRLING_MIN:
            prod *= z
            z += 1.0
            if prod > 1e280:
                shift += math.log(prod)
                prod = 1.0
        shift += math.log(prod)
    inv = 1.0 / z
    inv2 = inv * inv
    series = 0.0
    term = inv
    for coef in _STIRLING:
        series += coef * term
        term *= inv2
    return (z - 0.5) * math.log(z) - z + 0.5 * _LOG_2PI + series - shift


def log_beta(a: float, b: float) -> float:
    """Natural log of the Beta function ``B(a, b)`` for ``a, b > 0``."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"log_beta requires a, b > 0, got a={a!r}, b={b!r}")
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


# ---------------------------------------------------------------------------
# Modified Bessel function of the first kind


def _debye_polynomials(count: int) -> list[list[Fraction]]:
    """Coefficients (ascending powers of p) of the Debye polynomials u_0..u_{count-1}."""
    polys: list[list[Fraction]] = [[Fraction(1)]]
    for _ in range(1, count):
        u = polys[-1]
        deriv = [Fraction(k) * c for k, c in enumerate(u)][1:]
        # 1/2 p^2 (1 - p^2) u'(p)
        first = [Fraction(0)] * (len(deriv) + 4)
        for k, c in enumerate(deriv):
            first[k + 2] += c / 2
            first[k + 4] -= c / 2
        # 1/8 * integral_0^p (1 - 5 t^2) u(t) dt
        integrand = [Fraction(0)] * (len(u) + 2)
        for k, c in enumerate(u):
            integrand[k] += c
            integrand[k + 2] -= 5 * c
        second = [Fraction(0)] + [c / (8 * (k + 1)) for k, c in enumerate(integrand)]
        size = max(len(first), len(second))
        nxt = [Fraction(0)] * size
        for k, c in enumerate(first):
            nxt[k] += c
        for k, c in enumerate(second):
            nxt[k] += c
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt.pop()
        polys.append(nxt)
    return polys


_DEBYE = [[float(c) for c in poly] for poly in _debye_polynomials(13)]
_DEBYE_MIN_ORDER = 4.0
_SERIES_MARGIN = 20.0


def _horner(coefs: list[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coefs):
        acc = acc * x + c
    return acc


def _log_bessel_series(nu: float, x: float) -> float:
    half = 0.5 * x
    q = half * half
    total = 1.0
    term = 1.0
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + nu))
        total += term
        if term < 1e-17 * total:
            break
    # log(x) - log 2 rather than log(x / 2): halving a subnormal x underflows to 0
    return nu * (math.log(x) - math.log(2.0)) - log_gamma(nu + 1.0) + math.log(total)


def _log_bessel_hankel(nu: float, x: float) -> float:
    mu = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    k = 0
    while k < 60:
        k += 1
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def _log_bessel_debye(nu: float, x: float) -> float:
    z = x / nu
    root = math.sqrt(1.0 + z * z)
    p = 1.0 / root
    eta = root + math.log(z / (1.0 + root))
    total = 0.0
    scale = 1.0
    for poly in _DEBYE:
        contrib = _horner(poly, p) * scale
        total += contrib
        if abs(contrib) < 1e-17 * abs(total):
            break
        scale /= nu
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(total)


def log_bessel_i(nu: float, x: float) -> float:
    """Natural log of the modified Bessel function ``I_nu(x)``.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    x : float
        Argument, ``x >= 0``.

    Notes
    -----
    The convergent power series is used while ``x <= nu + 20``. Beyond that a
    uniform large-order expansion is used when ``nu >= 4`` and the
    large-argument expansion otherwise. ``log I_0(0) = 0`` and
    ``log I_nu(0) = -inf`` for ``nu > 0``.
    """
    nu = float(nu)
    x = float(x)
    if not (math.isfinite(nu) and nu >= 0.0):
        raise DomainError(f"Bessel order must be finite and >= 0, got {nu!r}")
    if not (math.isfinite(x) and x >= 0.0):
        raise DomainError(f"Bessel argument must be finite and >= 0, got {x!r}")
    if x == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    if x <= nu + _SERIES_MARGIN:
        return _log_bessel_series(nu, x)
    if nu >= _DEBYE_MIN_ORDER:
        return _log_bessel_debye(nu, x)
    return _log_bessel_hankel(nu, x)


def sphere_surface_area(d: int) -> LogValue:
    """Surface area of the unit sphere in ``R^d``, i.e. ``2 pi^(d/2) / Gamma(d/2)``."""
    d = _check_dimension(d)
    return LogValue(math.log(2.0) + 0.5 * d * math.log(math.pi) - log_gamma(0.5 * d))


def log_vmf_normalizer(d: int, kappa: float) -> float:
    """Log of the constant making ``C exp(kappa <mu, x>)`` a density on the sphere.

    At ``kappa = 0`` this is minus the log surface area.
    """
    d = _check_dimension(d)
    kappa = float(kappa)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    if kappa == 0.0:
        return -sphere_surface_area(d).log_magnitude
    nu = 0.5 * d - 1.0
    return nu * math.log(kappa) - 0.5 * d * _LOG_2PI - log_bessel_i(nu, kappa)


def _check_dimension(d: int) -> int:
    if isinstance(d, bool) or int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    return int(d)

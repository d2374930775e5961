from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from vmfexp.errors import DomainError
from vmfexp.specfn import (
    LogValue,
    log_bessel_i,
    log_beta,
    log_gamma,
    log_vmf_normalizer,
    sphere_surface_area,
)

mpmath.mp.dps = 40


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


class TestLogGamma:
    def test_examples(self):
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
        assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-15)
        assert log_gamma(0.5) == pytest.approx(0.5723649429247001, abs=1e-14)

    @pytest.mark.parametrize("z", np.geomspace(1e-3, 170, 80).tolist())
    def test_matches_mpmath(self, z):
        want = float(mpmath.loggamma(mpmath.mpf(z)))
        got = log_gamma(z)
        # relative error of exp(result) is the absolute error of the log
        assert abs(got - want) <= 1e-12

    @given(st.floats(0.1, 100.0))
    def test_recurrence(self, z):
        assert log_gamma(z + 1) - log_gamma(z) - math.log(z) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)


class TestLogBeta:
    def test_examples(self):
        assert log_beta(1, 1) == pytest.approx(0.0, abs=1e-15)
        assert log_beta(0.5, 1) == pytest.approx(math.log(2), abs=1e-14)
        assert log_beta(0.5, 0.5) == pytest.approx(2 * log_gamma(0.5) - log_gamma(1.0), abs=1e-14)
        assert log_beta(0.5, 0.5) == pytest.approx(math.log(math.pi), abs=1e-14)

    @given(st.floats(0.01, 80.0), st.floats(0.01, 80.0))
    def test_symmetric_and_matches_mpmath(self, a, b):
        assert log_beta(a, b) == pytest.approx(log_beta(b, a), abs=1e-13)
        assert log_beta(a, b) == pytest.approx(float(mpmath.log(mpmath.beta(a, b))), abs=1e-11)

    def test_domain(self):
        with pytest.raises(DomainError):
            log_beta(0.0, 1.0)
        with pytest.raises(DomainError):
            log_beta(1.0, -2.0)


class TestLogBessel:
    def test_examples(self):
        assert log_bessel_i(0, 0) == 0.0
        assert log_bessel_i(1.5, 0) == -math.inf
        series = sum(0.25 ** m / math.factorial(m) ** 2 for m in range(30))
        assert series == pytest.approx(1.2660658778, abs=1e-10)
        assert log_bessel_i(0, 1) == pytest.approx(math.log(series), abs=1e-14)
        closed = math.sinh(2) * math.sqrt(2 / (math.pi * 2))
        assert log_bessel_i(0.5, 2) == pytest.approx(math.log(closed), abs=1e-14)

    @pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.5, 3.9, 4.0, 11.5, 30.5, 99.0, 200.0])
    @pytest.mark.parametrize("x", [1e-8, 1e-3, 0.5, 3.0, 20.0, 33.0, 80.0, 150.0, 240.0, 500.0, 700.0])
    def test_matches_mpmath(self, nu, x):
        want = float(mpmath.log(mpmath.besseli(nu, x)))
        got = log_bessel_i(nu, x)
        assert abs(got - want) <= 1e-10

    def test_subnormal_argument(self):
        for nu in (0.0, 0.5, 3.0):
            want = float(mpmath.log(mpmath.besseli(nu, mpmath.mpf(5e-324))))
            assert log_bessel_i(nu, 5e-324) == pytest.approx(want, abs=1e-10)

    def test_switch_is_continuous(self):
        # both sides of the series / asymptotic boundary at x = nu + 20
        for nu in (0.0, 3.0, 4.0, 24.0):
            x = nu + 20
            lo, hi = log_bessel_i(nu, x * (1 - 1e-9)), log_bessel_i(nu, x * (1 + 1e-9))
            assert abs(hi - lo) < 1e-7

    def test_domain(self):
        with pytest.raises(DomainError):
            log_bessel_i(-1, 1)
        with pytest.raises(DomainError):
            log_bessel_i(0, -1)


class TestSphereArea:
    def test_examples(self):
        assert sphere_surface_area(2).log_magnitude == pytest.approx(math.log(2 * math.pi), abs=1e-14)
        assert sphere_surface_area(3).log_magnitude == pytest.approx(math.log(4 * math.pi), abs=1e-14)
        assert sphere_surface_area(4).value == pytest.approx(2 * math.pi ** 2 / math.exp(log_gamma(2)), rel=1e-13)

    def test_log_value_round_trip(self):
        assert LogValue(math.log(123.456)).value == pytest.approx(123.456, rel=1e-14)

    def test_domain(self):
        for d in (1, 0, 2.5):
            with pytest.raises(DomainError):
                sphere_surface_area(d)


class TestVmfNormalizer:
    def test_examples(self):
        assert log_vmf_normalizer(3, 0) == pytest.approx(-math.log(4 * math.pi), abs=1e-14)
        i0 = sum(0.25 ** m / math.factorial(m) ** 2 for m in range(30))
        assert log_vmf_normalizer(2, 1) == pytest.approx(-math.log(2 * math.pi * i0), abs=1e-13)
        assert log_vmf_normalizer(3, 2) == pytest.approx(math.log(2 / (4 * math.pi * math.sinh(2))), abs=1e-13)

    @given(st.integers(2, 64))
    def test_continuous_at_zero(self, d):
        assert abs(log_vmf_normalizer(d, 1e-8) + sphere_surface_area(d).log_magnitude) <= 1e-6

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    @pytest.mark.parametrize("d", [2, 3, 4, 7, 16, 33, 64])
    @pytest.mark.parametrize("kappa", [0, 0.5, 1, 2, 5, 10, 50])
    def test_density_integrates_to_one(self, d, kappa):
        # integrate C_d(k) e^{k t} over the sphere via the (1 - t^2)^{(d-3)/2} slice measure
        log_c = log_vmf_normalizer(d, kappa)
        if d == 2:
            total, _ = integrate.quad(lambda th: math.exp(log_c + kappa * math.cos(th)), 0, 2 * math.pi,
                                      epsabs=1e-11, epsrel=1e-11, limit=200)
        else:
            log_slice = sphere_surface_area(d - 1).log_magnitude
            expo = 0.5 * (d - 3)
            total, _ = integrate.quad(lambda t: math.exp(log_c + kappa * t + log_slice), -1, 1,
                                      weight="alg", wvar=(expo, expo), epsabs=1e-11, epsrel=1e-11, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            log_vmf_normalizer(3, -0.1)
        with pytest.raises(DomainError):
            log_vmf_normalizer(1, 1.0)

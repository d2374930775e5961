from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from vmfexp.errors import DomainError
from vmfexp.montecarlo import (
    ExperimentSpec,
    estimate_boltzmann_prob,
    estimate_vmf_prob,
    place_anchor_pair,
    run_grid,
)
from vmfexp.sphere import RandomSource
from vmfexp.theory import AsymptoticInput, exact_2d_vmf_prob, p0
from vmfexp.vmf import RadialLaw


class TestAnchorPair:
    def test_extremes(self):
        v, a = place_anchor_pair(5, 1.0, RandomSource(1))
        assert np.allclose(a.coords, v.coords, atol=1e-15)
        v, a = place_anchor_pair(5, -1.0, RandomSource(2))
        assert np.allclose(a.coords, -v.coords, atol=1e-15)

    @given(st.integers(2, 64), st.floats(-1, 1), st.integers(0, 2**32))
    def test_inner_product(self, d, dot, seed):
        v, a = place_anchor_pair(d, dot, RandomSource(seed))
        assert abs(v.dot(a) - dot) <= 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            place_anchor_pair(3, 1.5, RandomSource(0))


class TestSpec:
    def test_validation(self):
        with pytest.raises(DomainError):
            ExperimentSpec(d=1, kappa=1.0, dot_va=0.0)
        with pytest.raises(DomainError):
            ExperimentSpec(d=3, kappa=1.0, dot_va=2.0)
        with pytest.raises(DomainError):
            ExperimentSpec(d=3, kappa=1.0, dot_va=0.0, trials=0)
        with pytest.raises(DomainError):
            ExperimentSpec(d=3, kappa=1.0, dot_va=0.0, n_grid=())


class TestVmfEstimate:
    @pytest.mark.parametrize("d", [2, 5])
    def test_kappa_zero(self, d):
        # one draw per set keeps draws independent, so the binomial interval is exact
        spec = ExperimentSpec(d=d, kappa=0.0, dot_va=0.3, trials=20_000, resample_sets=20_000, seed=3)
        est = estimate_vmf_prob(spec, 30)
        assert est.covers(1 / 31)

    def test_matches_circle_oracle(self):
        spec = ExperimentSpec(d=2, kappa=1.0, dot_va=0.5, trials=100_000, resample_sets=100_000, seed=5)
        mc = estimate_vmf_prob(spec, 200)
        oracle = exact_2d_vmf_prob(1.0, math.acos(0.5), 200, 200_000, RandomSource(5))
        assert mc.overlaps(oracle)

    def test_in_unit_interval(self):
        spec = ExperimentSpec(d=3, kappa=5.0, dot_va=0.9, trials=2000, resample_sets=50, seed=6)
        est = estimate_vmf_prob(spec, 100)
        assert 0.0 <= est.p_hat <= 1.0 and est.trials_total == 2000

    def test_half_width_shrinks_with_trials(self):
        widths = []
        for trials in (40_000, 80_000):
            spec = ExperimentSpec(d=3, kappa=1.0, dot_va=0.5, trials=trials, resample_sets=400, seed=7)
            widths.append(estimate_vmf_prob(spec, 100).half_width_95)
        assert widths[0] / widths[1] == pytest.approx(math.sqrt(2), rel=0.1)


class TestBoltzmannEstimate:
    def test_kappa_zero_exact(self):
        spec = ExperimentSpec(d=4, kappa=0.0, dot_va=0.5, resample_sets=10, seed=8)
        est = estimate_boltzmann_prob(spec, 99)
        assert est.p_hat == 0.01 and est.half_width_95 == 0.0

    @pytest.mark.parametrize("d,kappa,dot", [(2, 1.0, 0.5), (3, 2.0, -0.3), (8, 4.0, 0.9)])
    def test_single_competitor_quadrature(self, d, kappa, dot):
        law = RadialLaw(0.0, d)
        expo = law.exponent

        def prob_given(t: float) -> float:
            return 1.0 / (1.0 + math.exp(kappa * (t - dot)))

        want, _ = integrate.quad(lambda t: prob_given(t) * math.exp(law.log_constant), -1, 1,
                                 weight="alg", wvar=(expo, expo))
        spec = ExperimentSpec(d=d, kappa=kappa, dot_va=dot, resample_sets=200_000, seed=9)
        est = estimate_boltzmann_prob(spec, 1)
        assert abs(est.p_hat - want) <= 1e-3

    def test_close_to_p0_at_large_n(self):
        spec = ExperimentSpec(d=4, kappa=1.0, dot_va=0.5, resample_sets=2000, seed=10)
        est = estimate_boltzmann_prob(spec, 10_000)
        assert abs(est.p_hat / p0(AsymptoticInput(10_000, 4, 1.0, 0.5)) - 1) <= 0.01


class TestGrid:
    def test_single_row(self):
        spec = ExperimentSpec(d=3, kappa=1.0, dot_va=0.5, n_grid=(100,), trials=1000, resample_sets=10, seed=11)
        rows = run_grid(spec)
        assert len(rows) == 1 and rows[0]["n"] == 100 and rows[0]["p1"] is not None

    def test_no_p1_on_circle(self):
        spec = ExperimentSpec(d=2, kappa=1.0, dot_va=0.5, n_grid=(100, 200), trials=1000, resample_sets=10, seed=12)
        assert all(row["p1"] is None for row in run_grid(spec))

    def test_independent_of_worker_count(self):
        spec = ExperimentSpec(d=3, kappa=1.0, dot_va=0.5, n_grid=(50, 300), trials=3000, resample_sets=17, seed=13)
        assert run_grid(spec, workers=1) == run_grid(spec, workers=3)

    def test_seed_changes_result(self):
        base = dict(d=3, kappa=1.0, dot_va=0.5, n_grid=(50,), trials=3000, resample_sets=17)
        a = run_grid(ExperimentSpec(**base, seed=1))
        b = run_grid(ExperimentSpec(**base, seed=2))
        assert a != b

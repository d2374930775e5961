from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from vmfexp.errors import DegenerateTangentError, DomainError
from vmfexp.sphere import (
    RandomSource,
    UnitVector,
    compose_radial_tangent,
    sample_uniform_sphere,
    tangent_component,
    uniform_sphere_batch,
)

finite = st.floats(-10.0, 10.0, allow_nan=False)


def vectors(d: int):
    return arrays(np.float64, d, elements=finite).filter(lambda a: np.linalg.norm(a) > 1e-3)


class TestUnitVector:
    def test_renormalizes_and_is_read_only(self):
        u = UnitVector([3.0, 4.0])
        assert np.allclose(u.coords, [0.6, 0.8])
        with pytest.raises(ValueError):
            u.coords[0] = 1.0

    def test_source_array_is_copied(self):
        raw = np.array([1.0, 0.0, 0.0])
        u = UnitVector(raw)
        raw[0] = 5.0
        assert u.coords[0] == 1.0

    @pytest.mark.parametrize("bad", [[0.0, 0.0], [1.0], [[1.0, 0.0]], [math.nan, 1.0]])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            UnitVector(bad)

    def test_dot_dimension_mismatch(self):
        with pytest.raises(DomainError):
            UnitVector([1, 0]).dot(UnitVector([1, 0, 0]))

    @given(vectors(5))
    def test_unit_norm(self, x):
        assert abs(np.linalg.norm(UnitVector(x).coords) - 1.0) <= 1e-9


class TestRandomSource:
    def test_reproducible(self):
        a = RandomSource(7, 3).generator.standard_normal(5)
        b = RandomSource(7, 3).generator.standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(7, 3).generator.random(1000)
        b = RandomSource(7, 4).generator.random(1000)
        c = RandomSource(7, 3).child(0).generator.random(1000)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)
        # independent uniforms are uncorrelated
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.15

    def test_children_are_stable(self):
        x = RandomSource(1).child(5).child(2).generator.integers(0, 1 << 62, 4)
        y = RandomSource(1).child(5).child(2).generator.integers(0, 1 << 62, 4)
        assert np.array_equal(x, y)

    @pytest.mark.parametrize("seed", [-1, 1 << 64, 1.5])
    def test_seed_range(self, seed):
        with pytest.raises(DomainError):
            RandomSource(seed)


class TestUniformSampling:
    def test_d2_norm(self):
        x = sample_uniform_sphere(2, RandomSource(0))
        assert abs(x.coords[0] ** 2 + x.coords[1] ** 2 - 1) < 1e-12

    def test_d3_coordinate_means(self):
        x = uniform_sphere_batch(3, 1_000_000, RandomSource(1))
        assert np.all(np.abs(x.mean(axis=0)) <= 0.005)

    def test_d8_second_moment(self):
        x = uniform_sphere_batch(8, 1_000_000, RandomSource(2))
        assert abs(np.mean(x[:, 0] ** 2) - 1 / 8) <= 0.002

    def test_rotation_invariance(self):
        d = 5
        gen = RandomSource(5).generator
        w = np.zeros(d)
        w[0] = 1.0
        rot, _ = np.linalg.qr(gen.standard_normal((d, d)))
        x1 = uniform_sphere_batch(d, 100_000, gen)
        x2 = uniform_sphere_batch(d, 100_000, gen)
        res = stats.ks_2samp(x1 @ w, x2 @ (rot @ w))
        assert res.pvalue > 0.01

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_uniform_sphere(1, RandomSource(0))


class TestTangent:
    def test_examples(self):
        e1, e2 = UnitVector.basis(2, 0), UnitVector.basis(2, 1)
        assert np.allclose(tangent_component(e1, e2).coords, e2.coords)
        assert np.allclose(tangent_component(e1, UnitVector([1, 1])).coords, e2.coords, atol=1e-15)
        with pytest.raises(DegenerateTangentError):
            tangent_component(e1, e1)

    def test_compose_examples(self):
        v = UnitVector.basis(4, 0)
        w = UnitVector.basis(4, 1)
        assert np.allclose(compose_radial_tangent(v, 1.0, w).coords, v.coords)
        assert np.allclose(compose_radial_tangent(v, 0.0, w).coords, w.coords)
        assert np.allclose(compose_radial_tangent(v, 0.5, w).coords, [0.5, math.sqrt(0.75), 0, 0])

    def test_compose_errors(self):
        v = UnitVector.basis(3, 0)
        with pytest.raises(DomainError):
            compose_radial_tangent(v, 1.5, UnitVector.basis(3, 1))
        with pytest.raises(DomainError):
            compose_radial_tangent(v, 0.5, UnitVector([1, 1, 0]))

    @given(vectors(6), vectors(6))
    def test_orthogonal_unit(self, a, b):
        v, u = UnitVector(a), UnitVector(b)
        assume(np.linalg.norm(u.coords - (u.coords @ v.coords) * v.coords) > 1e-6)
        t = tangent_component(v, u)
        assert abs(t.coords @ v.coords) <= 1e-9
        assert abs(np.linalg.norm(t.coords) - 1) <= 1e-9

    @given(vectors(4), vectors(4))
    def test_round_trip(self, a, b):
        v, x = UnitVector(a), UnitVector(b)
        assume(np.linalg.norm(x.coords - (x.coords @ v.coords) * v.coords) > 1e-6)
        back = compose_radial_tangent(v, x.dot(v), tangent_component(v, x))
        assert np.allclose(back.coords, x.coords, atol=1e-8)

    @given(vectors(3), st.floats(-1.0, 1.0), vectors(3))
    def test_compose_has_requested_dot(self, a, t, b):
        v, u = UnitVector(a), UnitVector(b)
        assume(np.linalg.norm(u.coords - (u.coords @ v.coords) * v.coords) > 1e-6)
        out = compose_radial_tangent(v, t, tangent_component(v, u))
        assert abs(out.dot(v) - t) <= 1e-9

"""Points on the unit hypersphere, seeded random streams and uniform sampling."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import DegenerateTangentError, DomainError

__all__ = [
    "UnitVector",
    "RandomSource",
    "sample_uniform_sphere",
    "uniform_sphere_batch",
    "tangent_component",
    "compose_radial_tangent",
    "as_unit_array",
]

PARALLEL_THRESHOLD = 1e-12
_U64 = 1 << 64


class UnitVector:
    """An immutable point on the unit sphere ``S^{d-1}``.

    The coordinates are copied and rescaled to unit Euclidean norm on
    construction; the stored array is read-only.
    """

    __slots__ = ("_coords",)

    def __init__(self, coords: Iterable[float] | np.ndarray) -> None:
        arr = np.array(coords, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise DomainError(f"a unit vector needs a 1-D array of length >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("unit vector coordinates must be finite")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise DomainError("cannot normalize the zero vector")
        arr /= norm
        arr.flags.writeable = False
        self._coords = arr

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def d(self) -> int:
        return self._coords.shape[0]

    def dot(self, other: UnitVector | np.ndarray) -> float:
        other_arr = other.coords if isinstance(other, UnitVector) else np.asarray(other, dtype=np.float64)
        if other_arr.shape != self._coords.shape:
            raise DomainError(f"dimension mismatch: {self.d} vs {other_arr.shape}")
        return float(self._coords @ other_arr)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        if dtype is None:
            return self._coords
        return self._coords.astype(dtype)

    def __len__(self) -> int:
        return self.d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UnitVector):
            return NotImplemented
        return np.array_equal(self._coords, other._coords)

    def __hash__(self) -> int:
        return hash(self._coords.tobytes())

    def __repr__(self) -> str:
        return f"UnitVector({np.array2string(self._coords, precision=6, separator=', ')})"

    @classmethod
    def basis(cls, d: int, axis: int) -> UnitVector:
        """The standard basis vector ``e_axis`` in ``R^d``."""
        e = np.zeros(d)
        e[axis] = 1.0
        return cls(e)


class RandomSource:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Backed by numpy's PCG64DXSM generator seeded through ``SeedSequence``
    spawn keys. Child streams derived with
    :meth:`child` are independent of each other and of the parent, so Monte
    Carlo workers can each own one without coordination.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()) -> None:
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if isinstance(value, bool) or int(value) != value or not 0 <= int(value) < _U64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self.generator = np.random.Generator(np.random.PCG64DXSM(seq))

    def child(self, index: int) -> RandomSource:
        """A new independent stream keyed by ``index`` under this one."""
        return RandomSource(self.seed, self.stream_id, (*self._path, int(index)))

    def __repr__(self) -> str:
        path = "".join(f"/{p}" for p in self._path)
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id}{path})"


def _generator(rng: RandomSource | np.random.Generator) -> np.random.Generator:
    return rng.generator if isinstance(rng, RandomSource) else rng


def as_unit_array(x: UnitVector | np.ndarray, d: int | None = None) -> np.ndarray:
    """Coordinates of ``x`` as a float64 array, checking the dimension if given."""
    arr = x.coords if isinstance(x, UnitVector) else np.asarray(x, dtype=np.float64)
    if d is not None and arr.shape[-1] != d:
        raise DomainError(f"dimension mismatch: expected {d}, got {arr.shape[-1]}")
    return arr


def _check_d(d: int) -> int:
    if isinstance(d, bool) or int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    return int(d)


def uniform_sphere_batch(d: int, size: int, rng: RandomSource | np.random.Generator) -> np.ndarray:
    """``size`` independent uniform points on ``S^{d-1}`` as rows of an array."""
    d = _check_d(d)
    gen = _generator(rng)
    x = gen.standard_normal((size, d))
    norms = np.linalg.norm(x, axis=1)
    bad = norms < 1e-150
    while np.any(bad):
        x[bad] = gen.standard_normal((int(bad.sum()), d))
        norms[bad] = np.linalg.norm(x[bad], axis=1)
        bad = norms < 1e-150
    x /= norms[:, None]
    return x


def sample_uniform_sphere(d: int, rng: RandomSource | np.random.Generator) -> UnitVector:
    """One uniform point on ``S^{d-1}`` (normalized standard Gaussian)."""
    return UnitVector(uniform_sphere_batch(d, 1, rng)[0])


def tangent_component(v: UnitVector, u: UnitVector) -> UnitVector:
    """Unit vector along the part of ``u`` orthogonal to ``v``.

    Raises
    ------
    DegenerateTangentError
        If ``u`` is (numerically) parallel to ``v``.
    """
    if u.d != v.d:
        raise DomainError(f"dimension mismatch: {v.d} vs {u.d}")
    vc = v.coords
    r = u.coords - (u.coords @ vc) * vc
    norm = float(np.linalg.norm(r))
    if norm <= PARALLEL_THRESHOLD:
        raise DegenerateTangentError("vector is parallel to the mean direction")
    r /= norm
    # second pass restores orthogonality lost to cancellation when u is nearly parallel
    r -= (r @ vc) * vc
    return UnitVector(r)


def compose_radial_tangent(v: UnitVector, t: float, tangent: UnitVector) -> UnitVector:
    """The unit vector ``t v + sqrt(1 - t^2) tangent``."""
    t = float(t)
    if not (-1.0 <= t <= 1.0):
        raise DomainError(f"radial coordinate must lie in [-1, 1], got {t!r}")
    if tangent.d != v.d:
        raise DomainError(f"dimension mismatch: {v.d} vs {tangent.d}")
    if abs(tangent.coords @ v.coords) > 1e-8:
        raise DomainError("tangent is not orthogonal to the mean direction")
    return UnitVector(t * v.coords + math.sqrt(max(0.0, 1.0 - t * t)) * tangent.coords)

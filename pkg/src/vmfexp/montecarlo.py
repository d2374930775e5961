"""Monte Carlo estimates of the probability of selecting one fixed action.

An experiment draws a state ``V`` and an anchor ``A`` with a prescribed inner
product, surrounds them with ``n`` uniform embeddings and asks how often each
policy picks the anchor. Every resampled embedding set has its own random
stream keyed by ``(seed, policy, n, set index)``, and sets are reduced in
index order, so results do not depend on how sets are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DegenerateTangentError, DomainError
from .estimate import ProbabilityEstimate
from .index import EmbeddingSet, ExactIndex
from .sphere import (
    RandomSource,
    UnitVector,
    _generator,
    compose_radial_tangent,
    sample_uniform_sphere,
    tangent_component,
    uniform_sphere_batch,
)
from .theory import AsymptoticInput, p0, p1
from .vmf import RadialLaw, VmfParams, radial_batch, sample_batch

__all__ = [
    "DEFAULT_N_GRID",
    "ExperimentSpec",
    "ProbabilityEstimate",
    "place_anchor_pair",
    "estimate_vmf_prob",
    "estimate_boltzmann_prob",
    "run_grid",
    "GRID_COLUMNS",
]

DEFAULT_N_GRID = (1_000, 3_000, 10_000, 30_000, 100_000)
GRID_COLUMNS = ("n", "p_vmf", "p_vmf_ci", "p_boltz", "p_boltz_ci", "p0", "p1")

_STREAM_VMF = 1
_STREAM_BOLTZMANN = 2
_DRAW_CHUNK = 1 << 16


@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters of one simulation sweep.

    ``trials`` is the number of vMF-exp draws per grid point, spread over
    ``resample_sets`` embedding sets. The Boltzmann estimate averages the
    exact anchor probability over ``boltzmann_sets`` sets (defaults to
    ``resample_sets``).
    """

    d: int
    kappa: float
    dot_va: float
    n_grid: tuple[int, ...] = DEFAULT_N_GRID
    trials: int = 8_000_000
    resample_sets: int = 1_000
    seed: int = 0
    boltzmann_sets: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 2:
            raise DomainError(f"d must be an integer >= 2, got {self.d!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not -1.0 <= self.dot_va <= 1.0:
            raise DomainError(f"dot_va must lie in [-1, 1], got {self.dot_va!r}")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise DomainError("n_grid must be a non-empty list of positive integers")
        if self.trials < 1 or self.resample_sets < 1:
            raise DomainError("trials and resample_sets must be >= 1")
        if self.boltzmann_sets is not None and self.boltzmann_sets < 1:
            raise DomainError("boltzmann_sets must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    @property
    def boltzmann_set_count(self) -> int:
        return self.resample_sets if self.boltzmann_sets is None else self.boltzmann_sets


def place_anchor_pair(d: int, dot_va: float, rng: RandomSource | np.random.Generator) -> tuple[UnitVector, UnitVector]:
    """A uniform state ``V`` and an anchor ``A`` with ``<V, A> = dot_va``."""
    if not -1.0 <= dot_va <= 1.0:
        raise DomainError(f"dot_va must lie in [-1, 1], got {dot_va!r}")
    gen = _generator(rng)
    v = sample_uniform_sphere(d, gen)
    while True:
        try:
            tangent = tangent_component(v, sample_uniform_sphere(d, gen))
            break
        except DegenerateTangentError:
            continue
    return v, compose_radial_tangent(v, dot_va, tangent)


def _set_stream(seed: int, policy: int, n: int, set_index: int) -> np.random.Generator:
    return RandomSource(seed, policy).child(n).child(set_index).generator


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _vmf_set_hits(d: int, kappa: float, dot_va: float, n: int, draws: int, seed: int, set_index: int) -> int:
    """Anchor hits among ``draws`` vMF-exp draws on one fresh embedding set."""
    gen = _set_stream(seed, _STREAM_VMF, n, set_index)
    v, a = place_anchor_pair(d, dot_va, gen)
    vectors = np.vstack([uniform_sphere_batch(d, n, gen), a.coords[None, :]])
    index = ExactIndex(EmbeddingSet(vectors, check_unit=False))
    params = VmfParams(v, kappa)
    hits = 0
    for size in _split(draws, max(1, math.ceil(draws / _DRAW_CHUNK))):
        if size:
            hits += int(index.selects(sample_batch(params, size, gen), n).sum())
    return hits


def _vmf_job(args: tuple) -> list[int]:
    d, kappa, dot_va, n, seed, jobs = args
    return [_vmf_set_hits(d, kappa, dot_va, n, draws, seed, i) for i, draws in jobs]


def _boltzmann_set_prob(d: int, kappa: float, dot_va: float, n: int, seed: int, set_index: int) -> float:
    """Exact Boltzmann probability of the anchor on one fresh embedding set.

    Only the inner products ``<V, X_i>`` enter the softmax, and for uniform
    ``X_i`` they are i.i.d. draws of the uniform radial law, so those are
    sampled directly.
    """
    if kappa == 0.0:
        return 1.0 / (n + 1)
    gen = _set_stream(seed, _STREAM_BOLTZMANN, n, set_index)
    t = radial_batch(RadialLaw(0.0, d), n, gen)
    top = max(float(t.max()), dot_va)
    total = float(np.exp(kappa * (t - top)).sum()) + math.exp(kappa * (dot_va - top))
    return math.exp(kappa * (dot_va - top)) / total


def _boltzmann_job(args: tuple) -> list[float]:
    d, kappa, dot_va, n, seed, indices = args
    return [_boltzmann_set_prob(d, kappa, dot_va, n, seed, i) for i in indices]


def _run(func: Callable[[tuple], list], tasks: list[tuple], workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [item for task in tasks for item in func(task)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [item for chunk in pool.map(func, tasks) for item in chunk]


def _chunks(items: Sequence, count: int) -> list[Sequence]:
    size = max(1, math.ceil(len(items) / count))
    return [items[i:i + size] for i in range(0, len(items), size)]


def estimate_vmf_prob(spec: ExperimentSpec, n: int, *, workers: int = 1) -> ProbabilityEstimate:
    """Fraction of vMF-exp draws that select the anchor.

    ``spec.trials`` draws are split evenly over ``spec.resample_sets`` fresh
    embedding sets. Each draw is checked with the exact nearest-neighbour
    rule. The half-width is the binomial one.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    sets = min(spec.resample_sets, spec.trials)
    jobs = list(enumerate(_split(spec.trials, sets)))
    tasks = [(spec.d, spec.kappa, spec.dot_va, n, spec.seed, chunk)
             for chunk in _chunks(jobs, max(1, workers) * 4)]
    hits = sum(_run(_vmf_job, tasks, workers))
    return ProbabilityEstimate.from_counts(hits, spec.trials)


def estimate_boltzmann_prob(spec: ExperimentSpec, n: int, *, workers: int = 1) -> ProbabilityEstimate:
    """Average exact Boltzmann probability of the anchor over fresh embedding sets.

    The half-width comes from the spread of the per-set probabilities;
    ``trials_total`` is the number of sets.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    sets = spec.boltzmann_set_count
    tasks = [(spec.d, spec.kappa, spec.dot_va, n, spec.seed, chunk)
             for chunk in _chunks(range(sets), max(1, workers) * 4)]
    probs = np.array(_run(_boltzmann_job, tasks, workers))
    if spec.kappa == 0.0:
        return ProbabilityEstimate(1.0 / (n + 1), 0.0, sets)
    return ProbabilityEstimate.from_samples(probs)


def run_grid(spec: ExperimentSpec, *, workers: int = 1) -> list[dict[str, Any]]:
    """One row per ``n`` with both estimates and the two approximations.

    ``p1`` is ``None`` when ``d = 2``.
    """
    rows = []
    for n in spec.n_grid:
        vmf = estimate_vmf_prob(spec, n, workers=workers)
        boltz = estimate_boltzmann_prob(spec, n, workers=workers)
        inp = AsymptoticInput(n, spec.d, spec.kappa, spec.dot_va)
        rows.append({
            "n": n,
            "p_vmf": vmf.p_hat,
            "p_vmf_ci": vmf.half_width_95,
            "p_boltz": boltz.p_hat,
            "p_boltz_ci": boltz.half_width_95,
            "p0": p0(inp),
            "p1": p1(inp) if spec.d >= 3 else None,
        })
    return rows

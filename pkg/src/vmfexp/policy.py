"""Exploration policies over an embedding set.

Each policy picks an action for a state vector ``v``. The von Mises-Fisher
policy perturbs ``v`` with a vMF draw and returns the nearest action of the
perturbed vector, so it never scores every action. The Boltzmann policies
are softmax distributions over inner products, either over every action or
over the ``m`` actions closest to ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Hashable, Iterable, Literal, Sequence

import numpy as np

from .errors import DomainError
from .index import EmbeddingSet, ExactIndex
from .sphere import RandomSource, UnitVector, _generator, as_unit_array
from .vmf import VmfParams, sample, sample_around, sample_batch

__all__ = [
    "PolicyConfig",
    "ActionDraw",
    "prob_random",
    "boltzmann_probabilities",
    "prob_boltzmann",
    "sample_boltzmann",
    "sample_boltzmann_batch",
    "truncated_boltzmann_probabilities",
    "prob_truncated_boltzmann",
    "sample_truncated_boltzmann",
    "sample_vmf_exp",
    "sample_vmf_exp_batch",
    "sample_epsilon_greedy",
    "generate_playlist",
    "jaccard_diversity",
]

Rng = RandomSource | np.random.Generator
PolicyKind = Literal["random", "epsilon_greedy", "boltzmann", "truncated_boltzmann", "vmf"]
_KINDS = ("random", "epsilon_greedy", "boltzmann", "truncated_boltzmann", "vmf")


@dataclass(frozen=True)
class PolicyConfig:
    """Which policy to run and its parameters.

    Only the fields used by ``kind`` matter: ``kappa`` for the Boltzmann and
    vMF policies, ``epsilon`` for epsilon-greedy and ``m`` for the truncated
    Boltzmann policy and the shuffled reference playlist.
    """

    kind: PolicyKind
    kappa: float = 0.0
    epsilon: float = 0.0
    m: int = 1

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise DomainError(f"unknown policy kind {self.kind!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be an integer >= 1, got {self.m!r}")


@dataclass(frozen=True)
class ActionDraw:
    """A selected action and how it was chosen."""

    id: Any
    mechanism: Literal["exploit", "explore"]
    perturbed_state: UnitVector | None = None


def _state(v: UnitVector | np.ndarray, embeddings: EmbeddingSet) -> np.ndarray:
    return as_unit_array(v, embeddings.d)


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    return kappa


def prob_random(n: int) -> float:
    """Probability of any single action under uniform random selection."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    return 1.0 / n


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    w = np.exp(shifted)
    return w / w.sum()


def boltzmann_probabilities(embeddings: EmbeddingSet, v: UnitVector | np.ndarray, kappa: float) -> np.ndarray:
    """Softmax of ``kappa <v, x_i>`` over every row of the set."""
    kappa = _check_kappa(kappa)
    scores = embeddings.vectors.astype(np.float64, copy=False) @ _state(v, embeddings)
    return _softmax(kappa * scores)


def prob_boltzmann(embeddings: EmbeddingSet, v: UnitVector | np.ndarray, kappa: float, i: Hashable) -> float:
    """Boltzmann probability of action ``i``."""
    row = embeddings.row_of(i)
    return float(boltzmann_probabilities(embeddings, v, kappa)[row])


def _inverse_cdf_pick(weights: np.ndarray, u: float) -> int:
    """Index drawn proportionally to non-negative ``weights`` using one uniform ``u``.

    Sums blocks first so the search only accumulates one block at full length.
    """
    n = weights.size
    block = 1024
    if n <= 4 * block:
        cdf = np.cumsum(weights, dtype=np.float64)
        return min(n - 1, int(np.searchsorted(cdf, u * cdf[-1], side="right")))
    full = n - n % block
    sums = weights[:full].reshape(-1, block).sum(axis=1, dtype=np.float64)
    if full < n:
        sums = np.append(sums, weights[full:].sum(dtype=np.float64))
    outer = np.cumsum(sums)
    target = u * outer[-1]
    b = min(sums.size - 1, int(np.searchsorted(outer, target, side="right")))
    lo = b * block
    inner = np.cumsum(weights[lo:lo + block], dtype=np.float64)
    rest = target - (outer[b - 1] if b > 0 else 0.0)
    j = int(np.searchsorted(inner, rest, side="right"))
    return min(n - 1, lo + min(j, inner.size - 1))


def sample_boltzmann(embeddings: EmbeddingSet, v: UnitVector | np.ndarray, kappa: float, rng: Rng) -> ActionDraw:
    """Draw an action from the Boltzmann distribution; costs one pass over the set."""
    row = sample_boltzmann_batch(embeddings, _state(v, embeddings)[None, :], kappa, rng)[0]
    return ActionDraw(embeddings.id_at(int(row)), "explore")


def _pick_rows(weights: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise inverse-CDF picks from a 2-D array of non-negative weights, and the row totals.

    Blocks of 1024 weights are summed in the weights' own precision and the
    block sums accumulated in float64.
    """
    m, n = weights.shape
    block = 1024
    full = n - n % block
    sums = weights[:, :full].reshape(m, -1, block).sum(axis=2).astype(np.float64)
    if full < n:
        sums = np.concatenate([sums, weights[:, full:].sum(axis=1, dtype=np.float64)[:, None]], axis=1)
    outer = np.cumsum(sums, axis=1)
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        target = u[i] * outer[i, -1]
        b = min(sums.shape[1] - 1, int(np.searchsorted(outer[i], target, side="right")))
        lo = b * block
        inner = np.cumsum(weights[i, lo:lo + block], dtype=np.float64)
        rest = target - (outer[i, b - 1] if b > 0 else 0.0)
        j = int(np.searchsorted(inner, rest, side="right"))
        out[i] = min(n - 1, lo + min(j, inner.size - 1))
    return out, outer[:, -1]


def sample_boltzmann_batch(embeddings: EmbeddingSet, states: np.ndarray, kappa: float, rng: Rng) -> np.ndarray:
    """One Boltzmann draw (a row position) per state row.

    Scores are computed in the precision of the stored vectors. Because
    every score is at most 1, ``exp(kappa (score - 1))`` cannot overflow and
    no per-row maximum is needed; rows whose weights all underflow are
    redone with the usual max shift.
    """
    kappa = _check_kappa(kappa)
    gen = _generator(rng)
    x = embeddings.vectors
    states = np.ascontiguousarray(as_unit_array(states, embeddings.d), dtype=x.dtype)
    out = np.empty(states.shape[0], dtype=np.int64)
    step = max(1, (1 << 24) // embeddings.n)
    u = gen.random(states.shape[0])
    for start in range(0, states.shape[0], step):
        stop = min(states.shape[0], start + step)
        logits = states[start:stop] @ x.T
        logits -= 1.0
        logits *= kappa
        np.exp(logits, out=logits)
        out[start:stop], totals = _pick_rows(logits, u[start:stop])
        for i in np.flatnonzero(totals < 1e-30):
            line = (states[start + i] @ x.T).astype(np.float64) * kappa
            line -= line.max()
            np.exp(line, out=line)
            out[start + i] = _inverse_cdf_pick(line, u[start + i])
    return out


def truncated_boltzmann_probabilities(embeddings: EmbeddingSet, exact_index: ExactIndex,
                                      v: UnitVector | np.ndarray, kappa: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the ``m`` closest actions to ``v`` and their softmax probabilities."""
    kappa = _check_kappa(kappa)
    if isinstance(m, bool) or int(m) != m or not 1 <= m <= embeddings.n:
        raise DomainError(f"m must be an integer in [1, {embeddings.n}], got {m!r}")
    rows, scores = exact_index.top_k_rows(_state(v, embeddings), int(m))
    return rows[0], _softmax(kappa * scores[0])


def prob_truncated_boltzmann(embeddings: EmbeddingSet, exact_index: ExactIndex, v: UnitVector | np.ndarray,
                             kappa: float, m: int, i: Hashable) -> float:
    """Truncated Boltzmann probability of action ``i``; zero outside the top ``m``."""
    row = embeddings.row_of(i)
    rows, probs = truncated_boltzmann_probabilities(embeddings, exact_index, v, kappa, m)
    hit = np.flatnonzero(rows == row)
    return float(probs[hit[0]]) if hit.size else 0.0


def sample_truncated_boltzmann(embeddings: EmbeddingSet, exact_index: ExactIndex, v: UnitVector | np.ndarray,
                               kappa: float, m: int, rng: Rng) -> ActionDraw:
    """Draw from the softmax restricted to the ``m`` closest actions."""
    rows, probs = truncated_boltzmann_probabilities(embeddings, exact_index, v, kappa, m)
    j = _inverse_cdf_pick(probs, _generator(rng).random())
    return ActionDraw(embeddings.id_at(int(rows[j])), "explore")


def sample_vmf_exp(embeddings: EmbeddingSet, exact_index: ExactIndex, v: UnitVector | np.ndarray,
                   kappa: float, rng: Rng) -> ActionDraw:
    """Perturb ``v`` with a vMF draw and return the nearest action of the result."""
    state = v if isinstance(v, UnitVector) else UnitVector(v)
    if state.d != embeddings.d:
        raise DomainError(f"dimension mismatch: {embeddings.d} vs {state.d}")
    perturbed = sample(VmfParams(state, kappa), rng)
    hit = exact_index.nearest(perturbed)
    return ActionDraw(hit.id, "explore", perturbed)


def sample_vmf_exp_batch(index, states: np.ndarray, kappa: float, rng: Rng) -> np.ndarray:
    """One vMF-exp draw (a row position) per state row, using any index with ``nearest_rows``."""
    kappa = _check_kappa(kappa)
    gen = _generator(rng)
    perturbed = sample_around(states, kappa, gen)
    rows, _ = index.nearest_rows(perturbed)
    return rows


def sample_epsilon_greedy(embeddings: EmbeddingSet, exact_index: ExactIndex, v: UnitVector | np.ndarray,
                          epsilon: float, rng: Rng) -> ActionDraw:
    """Uniform action with probability ``epsilon``, otherwise the nearest action of ``v``."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    gen = _generator(rng)
    if gen.random() < epsilon:
        return ActionDraw(embeddings.id_at(int(gen.integers(embeddings.n))), "explore")
    return ActionDraw(exact_index.nearest(_state(v, embeddings)).id, "exploit")


def generate_playlist(embeddings: EmbeddingSet, exact_index: ExactIndex, seed_action: Hashable,
                      policy: PolicyConfig, length: int, rng: Rng) -> list[Any]:
    """An ordered list of ``length`` distinct action ids seeded by ``seed_action``.

    ``vmf``: the top ``length`` neighbours of one perturbed copy of the seed's
    embedding. ``truncated_boltzmann``: ``length`` draws without replacement
    from the softmax over the seed's top ``m``, renormalizing after each pick.
    ``random``: the seed's top ``m`` shuffled, first ``length`` kept.
    """
    if isinstance(length, bool) or int(length) != length or not 1 <= length <= embeddings.n:
        raise DomainError(f"length must be an integer in [1, {embeddings.n}], got {length!r}")
    length = int(length)
    gen = _generator(rng)
    v = embeddings.vectors[embeddings.row_of(seed_action)].astype(np.float64)
    if policy.kind == "vmf":
        perturbed = sample_batch(VmfParams(UnitVector(v), policy.kappa), 1, gen)[0]
        rows, _ = exact_index.top_k_rows(perturbed, length)
        picked = rows[0]
    elif policy.kind == "truncated_boltzmann":
        if not length <= policy.m <= embeddings.n:
            raise DomainError(f"m must lie in [{length}, {embeddings.n}], got {policy.m}")
        rows, scores = exact_index.top_k_rows(v, policy.m)
        # sorting Gumbel-perturbed logits is distributed exactly like
        # sequential softmax sampling with renormalization after each pick
        keys = policy.kappa * scores[0] + gen.gumbel(size=policy.m)
        picked = rows[0][np.argsort(-keys, kind="stable")[:length]]
    elif policy.kind == "random":
        if not length <= policy.m <= embeddings.n:
            raise DomainError(f"m must lie in [{length}, {embeddings.n}], got {policy.m}")
        rows, _ = exact_index.top_k_rows(v, policy.m)
        picked = gen.permutation(rows[0])[:length]
    else:
        raise DomainError(f"playlists are not defined for policy kind {policy.kind!r}")
    return [embeddings.id_at(int(r)) for r in picked]


def jaccard_diversity(playlists: Sequence[Iterable[Hashable]]) -> float:
    """Mean Jaccard similarity over all unordered pairs of playlists."""
    sets = [set(p) for p in playlists]
    if len(sets) < 2:
        raise DomainError("need at least two playlists")
    total = 0.0
    count = 0
    for a, b in combinations(sets, 2):
        union = len(a | b)
        total += len(a & b) / union if union else 1.0
        count += 1
    return total / count

"""Experiment drivers behind the command-line tool.

Each driver returns a list of row dictionaries whose keys follow the column
tuples defined here, so the CLI can write them as CSV or JSON unchanged.
"""

from __future__ import annotations

import logging
import math
import statistics
import time
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DomainError, NotFoundError
from .estimate import ProbabilityEstimate
from .index import ApproxIndex, EmbeddingSet, ExactIndex, build_approx, recall_at_k
from .policy import (
    PolicyConfig,
    generate_playlist,
    jaccard_diversity,
    sample_boltzmann_batch,
    sample_vmf_exp_batch,
)
from .sphere import RandomSource, uniform_sphere_batch
from .theory import AsymptoticInput, p0, p1
from .vmf import VmfParams, sample_around, sample_batch
from .data import find_pair_with_dot

__all__ = [
    "REALDATA_COLUMNS",
    "BENCH_COLUMNS",
    "DIVERSITY_COLUMNS",
    "DEFAULT_DOT_GRID",
    "measure_throughput",
    "default_clusters",
    "tune_probes",
    "run_realdata",
    "run_bench",
    "run_diversity",
]

log = logging.getLogger(__name__)

REALDATA_COLUMNS = ("n", "dot_va", "dot_found", "p_vmf", "p_vmf_ci", "p_boltz", "p_boltz_ci", "p0", "p1")
BENCH_COLUMNS = ("n", "d", "bexp_per_s", "vmf_exact_per_s", "vmf_approx_per_s", "speedup",
                 "recall_at_10", "clusters", "probes")
DIVERSITY_COLUMNS = ("n", "d", "kappa", "m", "length", "repetitions", "seed_actions",
                     "jaccard_vmf", "jaccard_tb", "jaccard_reference", "tb_over_vmf")
DEFAULT_DOT_GRID = (0.9, 0.3, 0.0, -0.3, -0.9)

_STREAM_PAIRS = 11
_STREAM_SUBSETS = 12
_STREAM_BENCH = 13
_STREAM_DIVERSITY = 14


# ---------------------------------------------------------------------------
# real embeddings


def _subset_stream(seed: int, dot_slot: int, n: int, set_index: int) -> np.random.Generator:
    return RandomSource(seed, _STREAM_SUBSETS).child(dot_slot).child(n).child(set_index).generator


def run_realdata(embeddings: EmbeddingSet, n_grid: Sequence[int], dots: Sequence[float], kappa: float, *,
                 trials: int, resample_sets: int, seed: int = 0, tolerance: float = 0.01,
                 probe_budget: int = 10_000_000) -> list[dict[str, Any]]:
    """Anchor selection frequencies on subsets of a real, normalized embedding set.

    For each target inner product a pair ``(V, A)`` is taken from the set.
    Every resampled subset holds ``n`` other vectors drawn without
    replacement plus ``A``. vMF-exp draws are split evenly across subsets and
    checked with the exact nearest-neighbour rule; the Boltzmann value is
    the exact softmax probability of ``A``, averaged over subsets.

    A target with no qualifying pair yields one row with only ``dot_va``
    filled in.
    """
    total = embeddings.n
    if any(n < 1 or n > total - 2 for n in n_grid):
        raise DomainError(f"every n must lie in [1, {total - 2}] for this set")
    if trials < 1 or resample_sets < 1:
        raise DomainError("trials and resample_sets must be >= 1")
    x = embeddings.vectors.astype(np.float64, copy=False)
    rows: list[dict[str, Any]] = []
    for slot, target in enumerate(dots):
        try:
            v_id, a_id = find_pair_with_dot(embeddings, target, tolerance,
                                            RandomSource(seed, _STREAM_PAIRS).child(slot),
                                            probe_budget=probe_budget)
        except NotFoundError as exc:
            log.warning("dot %.3g: %s", target, exc)
            rows.append({col: None for col in REALDATA_COLUMNS} | {"dot_va": target})
            continue
        v_row, a_row = embeddings.row_of(v_id), embeddings.row_of(a_id)
        v, a = x[v_row], x[a_row]
        dot = float(v @ a)
        pool = np.setdiff1d(np.arange(total), [v_row, a_row])
        params = VmfParams(embeddings.vector(v_id), kappa)
        for n in n_grid:
            sets = min(resample_sets, trials)
            base, extra = divmod(trials, sets)
            hits = 0
            boltz = np.empty(sets)
            for s in range(sets):
                gen = _subset_stream(seed, slot, n, s)
                chosen = pool[gen.choice(pool.size, n, replace=False)]
                vectors = np.vstack([x[chosen], a[None, :]])
                index = ExactIndex(EmbeddingSet(vectors, check_unit=False))
                draws = base + (1 if s < extra else 0)
                for start in range(0, draws, 1 << 16):
                    batch = sample_batch(params, min(1 << 16, draws - start), gen)
                    hits += int(index.selects(batch, n).sum())
                logits = kappa * (vectors @ v)
                logits -= logits.max()
                w = np.exp(logits)
                boltz[s] = w[-1] / w.sum()
            vmf = ProbabilityEstimate.from_counts(hits, trials)
            bz = ProbabilityEstimate.from_samples(boltz) if sets > 1 else ProbabilityEstimate(float(boltz[0]), math.inf, 1)
            inp = AsymptoticInput(int(n), embeddings.d, kappa, max(-1.0, min(1.0, dot)))
            rows.append({
                "n": int(n),
                "dot_va": target,
                "dot_found": dot,
                "p_vmf": vmf.p_hat,
                "p_vmf_ci": vmf.half_width_95,
                "p_boltz": bz.p_hat,
                "p_boltz_ci": bz.half_width_95,
                "p0": p0(inp),
                "p1": p1(inp) if embeddings.d >= 3 else None,
            })
    return rows


# ---------------------------------------------------------------------------
# throughput


def measure_throughput(run: Callable[[int], Any], draws: int, *, repeats: int = 5,
                       warmup_fraction: float = 0.1) -> float:
    """Draws per second of ``run(draws)``: median over ``repeats`` timed calls.

    One untimed call with ``warmup_fraction`` of the budget comes first.
    Timing uses the monotonic performance counter.
    """
    if draws < 1 or repeats < 1:
        raise DomainError("draws and repeats must be >= 1")
    run(max(1, int(round(warmup_fraction * draws))))
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        run(draws)
        times.append(time.perf_counter() - start)
    return draws / statistics.median(times)


def default_clusters(n: int) -> int:
    """Power of two closest to ``4 sqrt(n)``, capped at ``n``."""
    return int(min(n, 2 ** round(math.log2(4.0 * math.sqrt(n)))))


def tune_probes(approx: ApproxIndex, exact: ExactIndex, queries: np.ndarray, *, target: float = 0.9,
                k: int = 10) -> tuple[ApproxIndex, float]:
    """Fewest probes (on a geometric ladder) whose recall@k reaches ``target``.

    Returns the re-probed index and its measured recall. Recall never
    decreases with more probes, so the first qualifying rung is kept; if
    none qualifies the full scan is returned.
    """
    k = min(k, exact.n)
    probes = max(1, approx.clusters // 64)
    while True:
        trial = approx.with_probes(probes)
        recall = recall_at_k(trial, exact, queries, k)
        if recall >= target or probes == approx.clusters:
            return trial, recall
        probes = min(approx.clusters, max(probes + 1, int(math.ceil(probes * 1.15))))


def run_bench(n_grid: Sequence[int], d: int, kappa: float, *, seed: int = 0, clusters: int | None = None,
              probes: int | None = None, recall_target: float = 0.9, vmf_draws: int = 16_384,
              bexp_work: int = 1 << 26) -> list[dict[str, Any]]:
    """Draws per second of exhaustive B-exp, vMF-exp with the exact index and with the IVF index.

    Embeddings are uniform on the sphere and stored in float32. States are
    fresh uniform points. Unless ``probes`` is given, the IVF index uses the
    fewest probes whose recall@10 on vMF-perturbed states reaches
    ``recall_target``. ``bexp_work`` bounds the B-exp budget to about
    ``bexp_work / n`` draws per timed call.
    """
    if kappa < 0 or not math.isfinite(kappa):
        raise DomainError(f"kappa must be finite and >= 0, got {kappa!r}")
    rows = []
    for n in n_grid:
        n = int(n)
        root = RandomSource(seed, _STREAM_BENCH).child(n)
        gen = root.generator
        emb = EmbeddingSet(uniform_sphere_batch(d, n, gen).astype(np.float32), check_unit=False)
        exact = ExactIndex(emb)
        c = default_clusters(n) if clusters is None else int(clusters)
        c = min(c, n)
        states = uniform_sphere_batch(d, max(vmf_draws, 1024), gen)
        if probes is None:
            approx = build_approx(emb, c, 1, seed=seed)
            recall_queries = sample_around(states[:500], kappa, gen)
            approx, recall = tune_probes(approx, exact, recall_queries, target=recall_target)
        else:
            approx = build_approx(emb, c, min(int(probes), c), seed=seed)
            recall = recall_at_k(approx, exact, sample_around(states[:500], kappa, gen), min(10, n))

        def bexp(m: int) -> None:
            sample_boltzmann_batch(emb, states[:m], kappa, gen)

        def vmf_exact(m: int) -> None:
            sample_vmf_exp_batch(exact, states[:m], kappa, gen)

        def vmf_approx(m: int) -> None:
            sample_vmf_exp_batch(approx, states[:m], kappa, gen)

        b_draws = int(min(states.shape[0], max(16, bexp_work // n)))
        bexp_rate = measure_throughput(bexp, b_draws)
        exact_rate = measure_throughput(vmf_exact, b_draws if n > 100_000 else min(vmf_draws, states.shape[0]))
        approx_rate = measure_throughput(vmf_approx, vmf_draws)
        rows.append({
            "n": n,
            "d": d,
            "bexp_per_s": bexp_rate,
            "vmf_exact_per_s": exact_rate,
            "vmf_approx_per_s": approx_rate,
            "speedup": approx_rate / bexp_rate,
            "recall_at_10": recall,
            "clusters": approx.clusters,
            "probes": approx.probes,
        })
        log.info("bench n=%d: B-exp %.1f/s, vMF exact %.1f/s, vMF approx %.1f/s (recall@10 %.3f, %d/%d probes)",
                 n, bexp_rate, exact_rate, approx_rate, recall, approx.probes, approx.clusters)
    return rows


# ---------------------------------------------------------------------------
# playlist diversity


def run_diversity(embeddings: EmbeddingSet, kappa: float, m: int, length: int, repetitions: int,
                  seed_actions: int, *, seed: int = 0) -> list[dict[str, Any]]:
    """Mean pairwise Jaccard similarity of repeated playlists per policy.

    ``seed_actions`` seeds are drawn from the set; each gets
    ``repetitions`` playlists from vMF-exp, truncated Boltzmann over the top
    ``m`` and the shuffled top-``m`` reference. Per-seed similarities are
    averaged over seeds.
    """
    if repetitions < 2:
        raise DomainError("repetitions must be >= 2")
    if seed_actions < 1 or seed_actions > embeddings.n:
        raise DomainError(f"seed_actions must lie in [1, {embeddings.n}]")
    if not 1 <= length <= m <= embeddings.n:
        raise DomainError(f"need 1 <= length <= m <= n, got length={length}, m={m}, n={embeddings.n}")
    root = RandomSource(seed, _STREAM_DIVERSITY)
    index = ExactIndex(embeddings)
    picks = root.generator.choice(embeddings.n, seed_actions, replace=False)
    policies = {
        "vmf": PolicyConfig("vmf", kappa=kappa),
        "tb": PolicyConfig("truncated_boltzmann", kappa=kappa, m=m),
        "reference": PolicyConfig("random", m=m),
    }
    scores: dict[str, list[float]] = {name: [] for name in policies}
    for slot, row in enumerate(picks):
        seed_id = embeddings.id_at(int(row))
        for p_slot, (name, config) in enumerate(policies.items()):
            gen = root.child(slot).child(p_slot).generator
            lists = [generate_playlist(embeddings, index, seed_id, config, length, gen) for _ in range(repetitions)]
            scores[name].append(jaccard_diversity(lists))
    mean = {name: float(np.mean(vals)) for name, vals in scores.items()}
    ratio = mean["tb"] / mean["vmf"] if mean["vmf"] > 0 else math.inf
    return [{
        "n": embeddings.n,
        "d": embeddings.d,
        "kappa": kappa,
        "m": m,
        "length": length,
        "repetitions": repetitions,
        "seed_actions": seed_actions,
        "jaccard_vmf": mean["vmf"],
        "jaccard_tb": mean["tb"],
        "jaccard_reference": mean["reference"],
        "tb_over_vmf": ratio,
    }]

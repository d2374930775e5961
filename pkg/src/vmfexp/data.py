"""Loading real word-embedding corpora and preparing them for the policies.

Text files hold one token per line followed by ``d`` decimal numbers. Values
are parsed to float32 so that a corpus written to a binary snapshot reloads
bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DegenerateSetError, DomainError, NotFoundError, ParseError
from .index import SNAPSHOT_MAGIC, EmbeddingSet, load_snapshot
from .sphere import RandomSource, _generator

__all__ = [
    "LoadReport",
    "NormalizeReport",
    "read_embeddings",
    "load_embeddings",
    "center_and_normalize",
    "find_pair_with_dot",
    "DEFAULT_PROBE_BUDGET",
]

log = logging.getLogger(__name__)

DEFAULT_PROBE_BUDGET = 10_000_000


@dataclass
class LoadReport:
    """What happened while reading a text embedding file."""

    lines: int = 0
    accepted: int = 0
    blank: int = 0
    malformed: int = 0
    malformed_lines: list[int] = field(default_factory=list)
    duplicates: int = 0


@dataclass
class NormalizeReport:
    """Vectors dropped by :func:`center_and_normalize` because they sat on the mean."""

    dropped_ids: list[Any] = field(default_factory=list)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_embeddings(path: str | Path, limit: int | None = None) -> tuple[EmbeddingSet, LoadReport]:
    """Read a text or snapshot embedding file and report skipped lines.

    Raises
    ------
    ParseError
        When a line's number of values differs from the first line's.
    DomainError
        When the file yields no vectors.
    """
    if limit is not None and limit < 1:
        raise DomainError(f"limit must be >= 1, got {limit!r}")
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(SNAPSHOT_MAGIC))
    if head == SNAPSHOT_MAGIC:
        emb = load_snapshot(path)
        if limit is not None and limit < emb.n:
            ids = None if emb._default_ids else emb.ids[:limit]
            emb = EmbeddingSet(emb.vectors[:limit].copy(), ids, check_unit=False)
        return emb, LoadReport(lines=emb.n, accepted=emb.n)

    report = LoadReport()
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    d: int | None = None
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            report.lines += 1
            stripped = line.strip()
            if not stripped:
                report.blank += 1
                continue
            if d is None:
                fields = stripped.split()
                if len(fields) < 3:
                    raise ParseError("expected a token followed by at least two values", lineno)
                d = len(fields) - 1
            parts = stripped.rsplit(None, d)
            if len(parts) != d + 1:
                raise ParseError(f"expected {d} values, found {len(parts) - 1}", lineno)
            token = parts[0]
            pieces = token.split()
            if len(pieces) > 1 and all(_is_float(p) for p in pieces[1:]):
                raise ParseError(f"expected {d} values, found {d + len(pieces) - 1}", lineno)
            try:
                values = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                values = None
            if values is None or not np.all(np.isfinite(values)):
                report.malformed += 1
                if len(report.malformed_lines) < 20:
                    report.malformed_lines.append(lineno)
                continue
            if token in seen:
                report.duplicates += 1
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(values.astype(np.float32))
            report.accepted += 1
            if limit is not None and report.accepted >= limit:
                break
    if not rows:
        raise DomainError(f"no embedding vectors found in {path}")
    if report.malformed:
        log.warning("%s: skipped %d malformed line(s), first at %s", path, report.malformed, report.malformed_lines[:5])
    if report.duplicates:
        log.warning("%s: kept the first of %d duplicated token(s)", path, report.duplicates)
    return EmbeddingSet(np.vstack(rows), tokens, check_unit=False), report


def load_embeddings(path: str | Path, limit: int | None = None) -> EmbeddingSet:
    """Raw (not yet normalized) embeddings from a text file or a binary snapshot."""
    return read_embeddings(path, limit)[0]


def center_and_normalize(raw: EmbeddingSet, *, report: NormalizeReport | None = None) -> EmbeddingSet:
    """Subtract the mean vector, then scale every vector to unit norm.

    Vectors that coincide with the mean are dropped (and listed in
    ``report`` when one is passed). The result is float64.
    """
    if raw.n < 2:
        raise DomainError("centering needs at least two vectors")
    x = raw.vectors.astype(np.float64)
    x -= x.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    scale = float(np.max(np.abs(raw.vectors))) if raw.n else 0.0
    zero = norms <= 1e-12 * max(scale, 1e-300)
    if np.all(zero):
        raise DegenerateSetError("all vectors are identical")
    keep = ~zero
    if np.any(zero):
        dropped = [raw.id_at(int(i)) for i in np.flatnonzero(zero)]
        log.warning("dropped %d vector(s) equal to the set mean", len(dropped))
        if report is not None:
            report.dropped_ids.extend(dropped)
    x = x[keep] / norms[keep, None]
    ids = raw.ids[keep] if not np.all(keep) or not raw._default_ids else None
    if ids is not None and raw._default_ids and np.all(keep):
        ids = None
    return EmbeddingSet(x, ids, check_unit=False)


def find_pair_with_dot(embeddings: EmbeddingSet, target: float, tolerance: float,
                       rng: RandomSource | np.random.Generator, *,
                       probe_budget: int = DEFAULT_PROBE_BUDGET) -> tuple[Any, Any]:
    """Ids of two distinct vectors whose inner product is within ``tolerance`` of ``target``.

    Small sets are scanned exhaustively (in a seeded random order); larger
    ones are probed in random blocks of anchor-candidate pairs until a match
    is found or ``probe_budget`` pairs have been examined.

    Raises
    ------
    NotFoundError
        With the closest inner product seen, when no pair qualifies.
    """
    if not (tolerance > 0.0 and math.isfinite(tolerance)):
        raise DomainError(f"tolerance must be positive, got {tolerance!r}")
    n = embeddings.n
    if n < 2:
        raise DomainError("need at least two vectors")
    gen = _generator(rng)
    x = embeddings.vectors.astype(np.float64, copy=False)
    best_gap = math.inf
    best_value = math.nan

    def scan(anchors: np.ndarray, cands: np.ndarray) -> tuple[int, int] | None:
        nonlocal best_gap, best_value
        dots = x[anchors] @ x[cands].T
        dots[anchors[:, None] == cands[None, :]] = np.nan
        gap = np.abs(dots - target)
        gap[np.isnan(gap)] = np.inf
        flat = int(np.argmin(gap))
        i, j = divmod(flat, cands.size)
        if gap[i, j] < best_gap:
            best_gap = float(gap[i, j])
            best_value = float(dots[i, j])
        hits = np.argwhere(gap <= tolerance)
        if hits.size:
            i, j = hits[0]
            return int(anchors[i]), int(cands[j])
        return None

    if n * (n - 1) // 2 <= probe_budget:
        order = gen.permutation(n)
        block = max(1, (1 << 20) // n)
        for start in range(0, n, block):
            found = scan(order[start:start + block], order)
            if found:
                return embeddings.id_at(found[0]), embeddings.id_at(found[1])
    else:
        probes = 0
        anchors_per_round, cands_per_round = 64, 4096
        while probes < probe_budget:
            anchors = gen.integers(0, n, anchors_per_round)
            cands = gen.integers(0, n, cands_per_round)
            found = scan(anchors, cands)
            probes += anchors_per_round * cands_per_round
            if found:
                return embeddings.id_at(found[0]), embeddings.id_at(found[1])
    raise NotFoundError(
        f"no pair with inner product within {tolerance} of {target}; closest was {best_value:.6g}"
    )

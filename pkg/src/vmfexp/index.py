"""Maximum inner product retrieval over a set of unit-norm embeddings.

Two indexes are provided. :class:`ExactIndex` is a brute-force scan that
serves as ground truth; :class:`ApproxIndex` is an inverted-file index that
clusters the vectors with spherical k-means and scans only the lists whose
centroids are most aligned with the query.

Ties between equal scores are always resolved in favour of the smaller row
position, so results are reproducible.
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError
from .sphere import RandomSource, UnitVector, _generator

__all__ = [
    "EmbeddingSet",
    "NeighborResult",
    "ExactIndex",
    "ApproxIndex",
    "build_exact",
    "build_approx",
    "nearest",
    "top_k",
    "recall_at_k",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_MAGIC = b"VMFXIDX1"
SNAPSHOT_VERSION = 1
_IDS_RANGE, _IDS_INT, _IDS_STR = 0, 1, 2
_CHUNK_ENTRIES = 1 << 23
_APPROX_BATCH = 4096


class EmbeddingSet:
    """Action embeddings (one per row) with their identifiers.

    Parameters
    ----------
    vectors : array of shape (n, d)
        float32 or float64 rows. Stored without copying when possible.
    ids : sequence, optional
        Unique identifiers, one per row. Defaults to ``0..n-1``.
    check_unit : bool
        Require every row to have unit norm within ``1e-6``.
    """

    def __init__(self, vectors: np.ndarray, ids: Sequence[Hashable] | np.ndarray | None = None,
                 *, check_unit: bool = True) -> None:
        arr = np.asarray(vectors)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim != 2:
            raise DomainError(f"vectors must be a 2-D array, got shape {arr.shape}")
        n, d = arr.shape
        if n < 1:
            raise DomainError("an embedding set needs at least one vector")
        if d < 2:
            raise DomainError("embeddings need dimension >= 2")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if check_unit:
            for start in range(0, n, 1 << 18):
                block = arr[start:start + (1 << 18)].astype(np.float64, copy=False)
                norms = np.sqrt(np.einsum("ij,ij->i", block, block))
                if not np.all(np.abs(norms - 1.0) <= 1e-6):
                    raise DomainError("embedding vectors must have unit norm")
        if ids is None:
            id_arr = np.arange(n, dtype=np.int64)
            self._default_ids = True
        else:
            id_arr = np.asarray(ids)
            if id_arr.dtype.kind not in "iu":
                id_arr = np.asarray(list(ids), dtype=object)
            if id_arr.shape != (n,):
                raise DomainError(f"expected {n} ids, got {id_arr.shape}")
            if len(set(id_arr.tolist())) != n:
                raise DomainError("action ids must be unique")
            self._default_ids = bool(
                id_arr.dtype.kind in "iu" and np.array_equal(id_arr, np.arange(n))
            )
        self.vectors = arr
        self.ids = id_arr
        self._row_of: dict[Any, int] | None = None

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n

    def id_at(self, row: int) -> Any:
        value = self.ids[row]
        return value.item() if isinstance(value, np.generic) else value

    def row_of(self, action_id: Hashable) -> int:
        """Row position of an action id."""
        if self._default_ids:
            if isinstance(action_id, (int, np.integer)) and 0 <= action_id < self.n:
                return int(action_id)
            raise DomainError(f"unknown action id {action_id!r}")
        if self._row_of is None:
            self._row_of = {k: i for i, k in enumerate(self.ids.tolist())}
        try:
            return self._row_of[action_id]
        except KeyError:
            raise DomainError(f"unknown action id {action_id!r}") from None

    def vector(self, action_id: Hashable) -> UnitVector:
        return UnitVector(self.vectors[self.row_of(action_id)])

    def same_as(self, other: EmbeddingSet) -> bool:
        if other is self:
            return True
        return (
            self.vectors.shape == other.vectors.shape
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass(frozen=True)
class NeighborResult:
    """An action id and its inner product with the query."""

    id: Any
    score: float


def _query_matrix(queries: UnitVector | np.ndarray | Iterable[UnitVector], d: int, dtype) -> np.ndarray:
    if isinstance(queries, UnitVector):
        q = queries.coords[None, :]
    elif isinstance(queries, np.ndarray):
        q = queries[None, :] if queries.ndim == 1 else queries
    else:
        q = np.array([u.coords if isinstance(u, UnitVector) else u for u in queries])
    if q.ndim != 2 or q.shape[1] != d:
        raise DomainError(f"query dimension mismatch: expected {d}, got shape {q.shape}")
    return np.ascontiguousarray(q, dtype=dtype)


def _sorted_top(scores: np.ndarray, rows: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``k`` entries of a 1-D score array by (score desc, row asc)."""
    if k < scores.size:
        kth = np.partition(scores, scores.size - k)[scores.size - k]
        keep = scores >= kth
        scores, rows = scores[keep], rows[keep]
    order = np.lexsort((rows, -scores))[:k]
    return rows[order], scores[order]


class ExactIndex:
    """Brute-force maximum inner product search.

    The index keeps a reference to the embedding vectors and allocates no
    per-vector storage of its own.
    """

    def __init__(self, embeddings: EmbeddingSet) -> None:
        self.embeddings = embeddings
        self._vectors = embeddings.vectors
        self._anchor_cache: OrderedDict[int, list[tuple[np.ndarray, np.ndarray]]] = OrderedDict()

    @property
    def n(self) -> int:
        return self.embeddings.n

    @property
    def d(self) -> int:
        return self.embeddings.d

    def _chunks(self, m: int) -> Iterable[slice]:
        step = max(1, _CHUNK_ENTRIES // self.n)
        for start in range(0, m, step):
            yield slice(start, min(m, start + step))

    def nearest_rows(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row of the best match and its score for each query row."""
        q = _query_matrix(queries, self.d, self._vectors.dtype)
        rows = np.empty(q.shape[0], dtype=np.int64)
        scores = np.empty(q.shape[0], dtype=np.float64)
        for sl in self._chunks(q.shape[0]):
            s = q[sl] @ self._vectors.T
            best = np.argmax(s, axis=1)  # first maximum, i.e. smallest row on ties
            rows[sl] = best
            scores[sl] = s[np.arange(best.size), best]
        return rows, scores

    def top_k_rows(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows and scores of the ``k`` best matches for each query row."""
        k = self._check_k(k)
        q = _query_matrix(queries, self.d, self._vectors.dtype)
        rows = np.empty((q.shape[0], k), dtype=np.int64)
        scores = np.empty((q.shape[0], k), dtype=np.float64)
        all_rows = np.arange(self.n)
        for sl in self._chunks(q.shape[0]):
            s = q[sl] @ self._vectors.T
            for i, line in enumerate(s):
                r, v = _sorted_top(line, all_rows, k)
                rows[sl.start + i] = r
                scores[sl.start + i] = v
        return rows, scores

    def nearest(self, query: UnitVector | np.ndarray) -> NeighborResult:
        rows, scores = self.nearest_rows(query)
        return NeighborResult(self.embeddings.id_at(int(rows[0])), float(scores[0]))

    def top_k(self, query: UnitVector | np.ndarray, k: int) -> list[NeighborResult]:
        rows, scores = self.top_k_rows(query, k)
        return [NeighborResult(self.embeddings.id_at(int(r)), float(s)) for r, s in zip(rows[0], scores[0])]

    def _check_k(self, k: int) -> int:
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= self.n:
            raise DomainError(f"k must be an integer in [1, {self.n}], got {k!r}")
        return int(k)

    def _anchor_tiers(self, row: int) -> list[tuple[np.ndarray, int]]:
        if row in self._anchor_cache:
            self._anchor_cache.move_to_end(row)
            return self._anchor_cache[row]
        x = self._vectors
        closeness = x @ x[row]
        others = np.delete(np.arange(self.n), row)
        order = others[np.lexsort((others, -closeness[others]))]
        tiers = []
        start = 0
        for size in (32, 1024, None):
            stop = order.size if size is None else min(order.size, start + size)
            if stop > start:
                rows = order[start:stop]
                # rows before `row` win ties, so keep them in a leading block
                rows = np.concatenate([rows[rows < row], rows[rows > row]])
                tiers.append((np.ascontiguousarray(x[rows]), int(np.count_nonzero(rows < row))))
            start = stop
        self._anchor_cache[row] = tiers
        if len(self._anchor_cache) > 4:
            self._anchor_cache.popitem(last=False)
        return tiers

    def selects(self, queries: np.ndarray, row: int) -> np.ndarray:
        """Whether ``row`` is the exact nearest neighbour of each query row.

        Equivalent to ``nearest_rows(queries)[0] == row`` but much cheaper
        when the same row is tested against many queries: competitors are
        checked in order of their closeness to that row, and a query is
        dropped as soon as one of them beats it.
        """
        if not 0 <= row < self.n:
            raise DomainError(f"row {row} out of range")
        q = _query_matrix(queries, self.d, self._vectors.dtype)
        target = q @ self._vectors[row]
        alive = np.arange(q.shape[0])
        sub = q
        for block, earlier in self._anchor_tiers(row):
            if alive.size == 0:
                break
            mine = target[alive]
            s = sub @ block.T
            keep = np.ones(alive.size, dtype=bool)
            if earlier:
                keep &= s[:, :earlier].max(axis=1) < mine
            if earlier < block.shape[0]:
                keep &= s[:, earlier:].max(axis=1) <= mine
            alive = alive[keep]
            sub = q[alive]
        out = np.zeros(q.shape[0], dtype=bool)
        out[alive] = True
        return out


class ApproxIndex:
    """Inverted-file index over spherical k-means clusters.

    A query scores every centroid, then scans the vectors of the ``probes``
    lists with the highest centroid scores.
    """

    def __init__(self, embeddings: EmbeddingSet, centroids: np.ndarray, assignment: np.ndarray,
                 probes: int) -> None:
        self.embeddings = embeddings
        self.centroids = np.ascontiguousarray(centroids, dtype=embeddings.vectors.dtype)
        clusters = self.centroids.shape[0]
        if not 1 <= probes <= clusters:
            raise DomainError(f"probes must lie in [1, {clusters}], got {probes}")
        self.probes = int(probes)
        self.order = np.argsort(assignment, kind="stable")
        counts = np.bincount(assignment, minlength=clusters)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.list_vectors = np.ascontiguousarray(embeddings.vectors[self.order])

    @property
    def clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def n(self) -> int:
        return self.embeddings.n

    @property
    def d(self) -> int:
        return self.embeddings.d

    def with_probes(self, probes: int) -> ApproxIndex:
        """The same index queried with a different number of probed lists."""
        if not 1 <= probes <= self.clusters:
            raise DomainError(f"probes must lie in [1, {self.clusters}], got {probes}")
        clone = object.__new__(ApproxIndex)
        clone.__dict__.update(self.__dict__)
        clone.probes = int(probes)
        return clone

    def _probe_lists(self, q: np.ndarray) -> np.ndarray:
        cs = q @ self.centroids.T
        p = self.probes
        if p == self.clusters:
            return np.broadcast_to(np.arange(p), (q.shape[0], p))
        return np.argpartition(cs, self.clusters - p, axis=1)[:, self.clusters - p:]

    def nearest_rows(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Best row among the probed lists, and its score, for each query row.

        Queries are grouped by probed list so that each list is scanned once
        per batch with a single matrix product.
        """
        q = _query_matrix(queries, self.d, self.list_vectors.dtype)
        m = q.shape[0]
        best = np.empty(m)
        best_row = np.empty(m, dtype=np.int64)
        for start in range(0, m, _APPROX_BATCH):
            stop = min(m, start + _APPROX_BATCH)
            best_row[start:stop], best[start:stop] = self._nearest_batch(q[start:stop])
        return best_row, best

    def _nearest_batch(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = q.shape[0]
        probed = self._probe_lists(q)
        p = probed.shape[1]
        flat = probed.ravel()
        key = flat.astype(np.uint16) if self.clusters <= 1 << 16 else flat
        by_list = np.argsort(key, kind="stable")
        owner = by_list // p
        bounds = np.searchsorted(flat[by_list], np.arange(self.clusters + 1))
        scores = np.full(flat.size, -np.inf)
        rows = np.full(flat.size, self.n, dtype=np.int64)
        offsets, order, vectors = self.offsets, self.order, self.list_vectors
        for lst in np.flatnonzero(bounds[1:] > bounds[:-1]):
            lo, hi = offsets[lst], offsets[lst + 1]
            if hi == lo:
                continue
            a, b = bounds[lst], bounds[lst + 1]
            s = q[owner[a:b]] @ vectors[lo:hi].T
            j = np.argmax(s, axis=1)
            scores[a:b] = s[np.arange(b - a), j]
            rows[a:b] = order[lo + j]
        # back to query-major layout, then the best per query (ties to the smaller row)
        per_query = np.empty_like(scores)
        per_query[by_list] = scores
        per_row = np.empty_like(rows)
        per_row[by_list] = rows
        per_query = per_query.reshape(m, p)
        per_row = per_row.reshape(m, p)
        top = per_query.max(axis=1)
        cand = np.where(per_query == top[:, None], per_row, self.n)
        return cand.min(axis=1), top

    def top_k_rows(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` best rows among the probed lists for each query row.

        Missing entries (fewer than ``k`` vectors probed) are filled with row
        ``-1`` and score ``-inf``.
        """
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= self.n:
            raise DomainError(f"k must be an integer in [1, {self.n}], got {k!r}")
        q = _query_matrix(queries, self.d, self.list_vectors.dtype)
        probed = self._probe_lists(q)
        rows = np.full((q.shape[0], k), -1, dtype=np.int64)
        scores = np.full((q.shape[0], k), -np.inf)
        for i in range(q.shape[0]):
            spans = [np.arange(self.offsets[c], self.offsets[c + 1]) for c in probed[i]]
            pos = np.concatenate(spans)
            if pos.size == 0:
                continue
            s = (self.list_vectors[pos] @ q[i]).astype(np.float64)
            r, v = _sorted_top(s, self.order[pos], min(k, pos.size))
            rows[i, : r.size] = r
            scores[i, : r.size] = v
        return rows, scores

    def nearest(self, query: UnitVector | np.ndarray) -> NeighborResult:
        rows, scores = self.nearest_rows(query)
        return NeighborResult(self.embeddings.id_at(int(rows[0])), float(scores[0]))

    def top_k(self, query: UnitVector | np.ndarray, k: int) -> list[NeighborResult]:
        rows, scores = self.top_k_rows(query, k)
        return [
            NeighborResult(self.embeddings.id_at(int(r)), float(s))
            for r, s in zip(rows[0], scores[0]) if r >= 0
        ]


def build_exact(embeddings: EmbeddingSet) -> ExactIndex:
    """Exact index over ``embeddings``."""
    if embeddings.n < 1:
        raise DomainError("cannot index an empty set")
    return ExactIndex(embeddings)


def _assign(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.empty(vectors.shape[0], dtype=np.int64)
    step = max(1, _CHUNK_ENTRIES // centroids.shape[0])
    for start in range(0, vectors.shape[0], step):
        out[start:start + step] = np.argmax(vectors[start:start + step] @ centroids.T, axis=1)
    return out


def build_approx(embeddings: EmbeddingSet, clusters: int, probes: int, *, iterations: int = 10,
                 seed: int = 0, train_size: int | None = None) -> ApproxIndex:
    """Inverted-file index with ``clusters`` lists probed ``probes`` at a time.

    Centroids come from ``iterations`` rounds of spherical k-means on a
    seeded sample of at most ``train_size`` vectors (default ``64 * clusters``),
    started from distinct randomly chosen vectors. A centroid that loses all
    its members keeps its previous position.
    """
    n = embeddings.n
    if isinstance(clusters, bool) or int(clusters) != clusters or not 1 <= clusters <= n:
        raise DomainError(f"clusters must be an integer in [1, {n}], got {clusters!r}")
    if isinstance(probes, bool) or int(probes) != probes or not 1 <= probes <= clusters:
        raise DomainError(f"probes must be an integer in [1, {clusters}], got {probes!r}")
    if iterations < 0:
        raise DomainError("iterations must be >= 0")
    gen = RandomSource(seed, stream_id=0x1F).generator
    vectors = embeddings.vectors
    limit = n if train_size is None else int(train_size)
    limit = min(n, max(limit if train_size is not None else 64 * clusters, clusters))
    train = vectors if limit == n else vectors[np.sort(gen.choice(n, limit, replace=False))]
    centroids = train[gen.choice(train.shape[0], clusters, replace=False)].astype(vectors.dtype)
    for _ in range(iterations):
        labels = _assign(train, centroids)
        sums = np.zeros(centroids.shape, dtype=np.float64)
        np.add.at(sums, labels, train)
        norms = np.linalg.norm(sums, axis=1)
        live = norms > 0
        centroids[live] = (sums[live] / norms[live, None]).astype(vectors.dtype)
    assignment = _assign(vectors, centroids)
    return ApproxIndex(embeddings, centroids, assignment, int(probes))


def nearest(index: ExactIndex | ApproxIndex, query: UnitVector | np.ndarray) -> NeighborResult:
    """Best match for ``query`` according to ``index``."""
    return index.nearest(query)


def top_k(index: ExactIndex | ApproxIndex, query: UnitVector | np.ndarray, k: int) -> list[NeighborResult]:
    """The ``k`` best matches for ``query``, best first."""
    return index.top_k(query, k)


def recall_at_k(approx: ApproxIndex | ExactIndex, exact: ExactIndex,
                queries: np.ndarray | Sequence[UnitVector], k: int) -> float:
    """Mean fraction of the exact top ``k`` that the approximate index also returns."""
    if not approx.embeddings.same_as(exact.embeddings):
        raise DomainError("both indexes must cover the same embedding set")
    q = _query_matrix(queries, exact.d, np.float64)
    if q.shape[0] == 0:
        raise DomainError("recall needs at least one query")
    got, _ = approx.top_k_rows(q, k)
    want, _ = exact.top_k_rows(q, k)
    hits = 0
    for a, b in zip(got, want):
        hits += np.intersect1d(a[a >= 0], b).size
    return hits / (k * q.shape[0])


# ---------------------------------------------------------------------------
# binary snapshot


def save_snapshot(embeddings: EmbeddingSet, path: str | Path) -> None:
    """Write the embedding set as little-endian float32 rows plus an id table."""
    n, d = embeddings.n, embeddings.d
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IQI", SNAPSHOT_VERSION, n, d))
        rows = np.ascontiguousarray(embeddings.vectors, dtype="<f4")
        fh.write(rows.tobytes())
        ids = embeddings.ids
        if embeddings._default_ids:
            fh.write(struct.pack("<B", _IDS_RANGE))
        elif ids.dtype.kind in "iu":
            fh.write(struct.pack("<B", _IDS_INT))
            fh.write(np.ascontiguousarray(ids, dtype="<i8").tobytes())
        else:
            fh.write(struct.pack("<B", _IDS_STR))
            buf = io.BytesIO()
            for item in ids.tolist():
                raw = str(item).encode("utf-8")
                buf.write(struct.pack("<I", len(raw)))
                buf.write(raw)
            fh.write(buf.getvalue())


def load_snapshot(path: str | Path, *, check_unit: bool = False) -> EmbeddingSet:
    """Read a snapshot written by :func:`save_snapshot`."""
    data = Path(path).read_bytes()
    header = len(SNAPSHOT_MAGIC) + struct.calcsize("<IQI")
    if len(data) < header or data[:8] != SNAPSHOT_MAGIC:
        raise ParseError("not an index snapshot (bad magic)")
    version, n, d = struct.unpack_from("<IQI", data, 8)
    if version != SNAPSHOT_VERSION:
        raise ParseError(f"unsupported snapshot version {version}")
    body = n * d * 4
    if len(data) < header + body + 1:
        raise ParseError("snapshot is truncated")
    vectors = np.frombuffer(data, dtype="<f4", count=n * d, offset=header).reshape(n, d).astype(np.float32)
    pos = header + body
    kind = data[pos]
    pos += 1
    if kind == _IDS_RANGE:
        ids = None
    elif kind == _IDS_INT:
        if len(data) < pos + 8 * n:
            raise ParseError("snapshot id table is truncated")
        ids = np.frombuffer(data, dtype="<i8", count=n, offset=pos).astype(np.int64)
    elif kind == _IDS_STR:
        ids = []
        for _ in range(n):
            if len(data) < pos + 4:
                raise ParseError("snapshot id table is truncated")
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            ids.append(data[pos:pos + length].decode("utf-8"))
            pos += length
    else:
        raise ParseError(f"unknown id table kind {kind}")
    return EmbeddingSet(vectors, ids, check_unit=check_unit)

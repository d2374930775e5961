from __future__ import annotations

import math
import os

import numpy as np
import pytest

from vmfexp.data import (
    NormalizeReport,
    center_and_normalize,
    find_pair_with_dot,
    load_embeddings,
    read_embeddings,
)
from vmfexp.errors import DegenerateSetError, DomainError, NotFoundError, ParseError
from vmfexp.index import EmbeddingSet, save_snapshot
from vmfexp.sphere import RandomSource, uniform_sphere_batch


def _write(tmp_path, text: str, name: str = "emb.txt", newline: str = "\n"):
    path = tmp_path / name
    path.write_bytes(text.replace("\n", newline).encode("utf-8"))
    return path


class TestLoad:
    def test_three_lines(self, tmp_path):
        emb = load_embeddings(_write(tmp_path, "a 1 0\nb 0 1\nc -1 0.5\n"))
        assert emb.n == 3 and emb.d == 2
        assert emb.ids.tolist() == ["a", "b", "c"]
        assert emb.vectors.dtype == np.float32
        assert emb.vectors[2].tolist() == [-1.0, 0.5]

    def test_short_line_names_line(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_embeddings(_write(tmp_path, "a 1 0 0\nb 0 1 0\nc 1 0\n"))
        assert err.value.line == 3

    def test_long_line_names_line(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_embeddings(_write(tmp_path, "a 1 0\nb 0 1 2\n"))
        assert err.value.line == 2

    def test_crlf(self, tmp_path):
        emb = load_embeddings(_write(tmp_path, "a 1 0\nb 0 1\n", newline="\r\n"))
        assert emb.ids.tolist() == ["a", "b"] and emb.vectors[1].tolist() == [0.0, 1.0]

    def test_malformed_blank_and_duplicates(self, tmp_path):
        text = "a 1 0\n\nb x 1\nc nan 1\na 5 5\nd 0.5 0.5\n"
        emb, report = read_embeddings(_write(tmp_path, text))
        assert emb.ids.tolist() == ["a", "d"]
        assert emb.vectors[0].tolist() == [1.0, 0.0]
        assert report.blank == 1 and report.malformed == 2 and report.duplicates == 1
        assert report.malformed_lines == [3, 4]

    def test_limit(self, tmp_path):
        lines = "".join(f"w{i} {i} 1\n" for i in range(50))
        assert load_embeddings(_write(tmp_path, lines), limit=7).n == 7

    def test_empty_file(self, tmp_path):
        with pytest.raises(DomainError):
            load_embeddings(_write(tmp_path, "\n\n"))

    def test_unicode_tokens(self, tmp_path):
        emb = load_embeddings(_write(tmp_path, "café 1 2\n日本 3 4\n"))
        assert emb.ids.tolist() == ["café", "日本"]

    def test_snapshot_round_trip_is_bit_exact(self, tmp_path):
        gen = RandomSource(1).generator
        values = gen.standard_normal((20, 5))
        text = "".join(f"tok{i} " + " ".join(repr(float(v)) for v in row) + "\n" for i, row in enumerate(values))
        first = load_embeddings(_write(tmp_path, text))
        snap = tmp_path / "emb.idx"
        save_snapshot(first, snap)
        second = load_embeddings(snap)
        assert second.vectors.tobytes() == first.vectors.tobytes()
        assert second.ids.tolist() == first.ids.tolist()
        assert load_embeddings(snap, limit=4).n == 4


class TestNormalize:
    def test_already_centered(self):
        out = center_and_normalize(EmbeddingSet(np.array([[1.0, 0.0], [-1.0, 0.0]])))
        assert out.vectors.tolist() == [[1.0, 0.0], [-1.0, 0.0]]

    def test_two_point_example(self):
        out = center_and_normalize(EmbeddingSet(np.array([[2.0, 0.0], [0.0, 2.0]]), check_unit=False))
        h = math.sqrt(0.5)
        assert np.allclose(out.vectors, [[h, -h], [-h, h]], atol=1e-15)

    def test_unit_norms_and_idempotent(self):
        raw = EmbeddingSet(RandomSource(2).generator.normal(0.3, 2.0, (5000, 25)).astype(np.float32), check_unit=False)
        once = center_and_normalize(raw)
        assert np.all(np.abs(np.linalg.norm(once.vectors, axis=1) - 1) <= 1e-9)
        # a second pass recentres on whatever mean the unit vectors have
        shifted = once.vectors - once.vectors.mean(axis=0)
        want = shifted / np.linalg.norm(shifted, axis=1)[:, None]
        assert np.allclose(center_and_normalize(once).vectors, want, rtol=0, atol=1e-12)

    def test_idempotent_on_symmetric_set(self):
        half = RandomSource(11).generator.standard_normal((2000, 10))
        once = center_and_normalize(EmbeddingSet(np.vstack([half, -half]), check_unit=False))
        twice = center_and_normalize(once)
        assert np.max(np.abs(twice.vectors - once.vectors)) <= 1e-9

    @pytest.mark.skipif(not os.environ.get("VMFEXP_GLOVE25"), reason="set VMFEXP_GLOVE25 to a 25-d GloVe text file")
    def test_idempotent_on_glove(self):
        raw, _ = read_embeddings(os.environ["VMFEXP_GLOVE25"], limit=100_000)
        once = center_and_normalize(raw)
        twice = center_and_normalize(once)
        assert np.max(np.abs(twice.vectors - once.vectors)) <= 1e-6

    def test_drops_mean_vectors(self):
        raw = EmbeddingSet(np.array([[1.0, 1.0], [0.0, 0.0], [-1.0, -1.0], [2.0, -2.0], [-2.0, 2.0]]),
                           ids=["p", "mid", "q", "r", "s"], check_unit=False)
        report = NormalizeReport()
        out = center_and_normalize(raw, report=report)
        assert report.dropped_ids == ["mid"]
        assert out.ids.tolist() == ["p", "q", "r", "s"]

    def test_identical_vectors(self):
        with pytest.raises(DegenerateSetError):
            center_and_normalize(EmbeddingSet(np.ones((4, 3)), check_unit=False))

    def test_needs_two(self):
        with pytest.raises(DomainError):
            center_and_normalize(EmbeddingSet(np.array([[1.0, 0.0]])))


class TestFindPair:
    def test_enumeration_example(self):
        emb = EmbeddingSet(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]), ids=["e", "n", "w"])
        v, a = find_pair_with_dot(emb, 0.0, 1e-9, RandomSource(3))
        assert {v, a} in ({"e", "n"}, {"n", "w"})

    def test_no_duplicates_means_no_unit_dot(self):
        emb = EmbeddingSet(uniform_sphere_batch(3, 200, RandomSource(4)))
        with pytest.raises(NotFoundError) as err:
            find_pair_with_dot(emb, 1.0, 1e-6, RandomSource(5))
        assert "closest" in str(err.value)

    def test_randomized_probing(self):
        emb = EmbeddingSet(uniform_sphere_batch(8, 20_000, RandomSource(6)))
        for target in (0.9, 0.3, 0.0, -0.3, -0.9):
            v, a = find_pair_with_dot(emb, target, 0.01, RandomSource(7), probe_budget=10**7)
            assert v != a
            assert abs(float(emb.vectors[emb.row_of(v)] @ emb.vectors[emb.row_of(a)]) - target) <= 0.01

    def test_deterministic(self):
        emb = EmbeddingSet(uniform_sphere_batch(4, 3000, RandomSource(8)))
        first = find_pair_with_dot(emb, 0.5, 0.01, RandomSource(9))
        assert find_pair_with_dot(emb, 0.5, 0.01, RandomSource(9)) == first

    def test_bad_tolerance(self):
        emb = EmbeddingSet(uniform_sphere_batch(3, 10, RandomSource(10)))
        with pytest.raises(DomainError):
            find_pair_with_dot(emb, 0.0, 0.0, RandomSource(0))

import math

import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score

from kdcode.codec import CodeBook, KdSpec
from kdcode.evaluation import (
    ParamCount,
    code_groups,
    compression_rate,
    mean_intra_group_cosine,
    mean_pairwise_cosine,
    neighbor_preservation,
    nmi,
    param_count,
)
from kdcode.numerics import make_rng


class TestParamCount:
    def test_small_model_accounting(self):
        counts = param_count(KdSpec(50, 10, 10000), code_width=200, embed_width=200)
        assert counts.conventional_baseline == 2_000_000
        assert counts.code_embedding_params == 100_000
        assert counts.composer_params == 40_000
        assert counts.total == 140_000

    def test_tiny_product(self):
        counts = param_count(KdSpec(2, 1, 2), code_width=3, embed_width=5)
        assert counts.code_embedding_params == 6

    def test_lstm_formula(self):
        counts = param_count(KdSpec(50, 10, 10000), 200, 200, variant="lstm")
        assert counts.composer_params == 4 * (200**2 + 200) + 200 * 200

    def test_total_invariant_enforced(self):
        with pytest.raises(ValueError):
            ParamCount(10, 5, 16, 100)

    def test_integer_exactness_large(self):
        counts = param_count(KdSpec(1000, 20, 10**9), 1500, 1500)
        assert counts.conventional_baseline == 10**9 * 1500
        assert counts.code_embedding_params == 20 * 1000 * 1500


class TestCompressionRate:
    def test_small_linear_rate(self):
        counts = param_count(KdSpec(50, 10, 10000), 200, 200)
        assert compression_rate(counts) == 0.05

    def test_identity_rate(self):
        counts = ParamCount(500, 0, 500, 500)
        assert compression_rate(counts) == 1.0

    def test_small_lstm_rate_with_composer(self):
        counts = param_count(KdSpec(50, 10, 10000), 200, 200, variant="lstm")
        rate = compression_rate(counts, include_composer=True)
        assert rate == (100_000 + 200_800) / 2_000_000
        assert rate <= 0.18

    def test_composer_inclusion_flag(self):
        counts = param_count(KdSpec(4, 2, 16), 3, 3)
        assert compression_rate(counts, True) > compression_rate(counts, False)


class TestNmi:
    def test_identical_partitions(self):
        assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0

    def test_relabeling_invariance(self):
        assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_independent_partitions(self):
        # hand contingency: every cell 1/4, information is exactly zero
        assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0

    def test_both_constant(self):
        assert nmi([3, 3, 3], [7, 7, 7]) == 1.0

    def test_one_constant(self):
        assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nmi([0, 1], [0, 1, 2])

    def test_symmetry_is_bitwise(self):
        rng = make_rng(1)
        for _ in range(50):
            a = rng.integers(0, 5, size=40)
            b = rng.integers(0, 7, size=40)
            assert nmi(a, b) == nmi(b, a)

    def test_label_permutation_invariance(self):
        rng = make_rng(2)
        a = rng.integers(0, 4, size=60)
        b = rng.integers(0, 5, size=60)
        base = nmi(a, b)
        mapping = rng.permutation(4)
        assert nmi(mapping[a], b) == pytest.approx(base, rel=1e-12)

    def test_range_over_1000_random_trials(self):
        rng = make_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 30))
            a = rng.integers(0, int(rng.integers(1, 6)) + 1, size=n)
            b = rng.integers(0, int(rng.integers(1, 6)) + 1, size=n)
            value = nmi(a, b)
            assert 0.0 <= value <= 1.0

    @pytest.mark.parametrize("average", ["geometric", "arithmetic", "max"])
    def test_matches_sklearn_oracle(self, average):
        rng = make_rng(4)
        for _ in range(25):
            a = rng.integers(0, 4, size=50)
            b = rng.integers(0, 6, size=50)
            expected = normalized_mutual_info_score(a, b, average_method=average)
            assert nmi(a, b, average=average) == pytest.approx(expected, abs=1e-10)

    def test_string_labels_accepted(self):
        assert nmi(["x", "x", "y"], ["p", "p", "q"]) == 1.0

    def test_unknown_average(self):
        with pytest.raises(ValueError):
            nmi([0, 1], [0, 1], average="harmonic")


def _brute_force_preservation(orig, rec, k):
    def top_k(mat):
        n = mat.shape[0]
        unit = []
        for row in mat:
            norm = math.sqrt(float(row @ row))
            unit.append(row / norm if norm > 0 else row * 0.0)
        lists = []
        for i in range(n):
            sims = [(-(unit[i] @ unit[j]), j) for j in range(n) if j != i]
            sims.sort()
            lists.append({j for _, j in sims[:k]})
        return lists
    a = top_k(orig)
    b = top_k(rec)
    return float(np.mean([len(a[i] & b[i]) / k for i in range(len(a))]))


class TestNeighborPreservation:
    def test_identity_reconstruction(self):
        rng = make_rng(5)
        mat = rng.normal(size=(30, 6))
        assert neighbor_preservation(mat, mat.copy(), 5) == 1.0

    def test_cosine_scale_invariance(self):
        rng = make_rng(6)
        mat = rng.normal(size=(25, 4))
        assert neighbor_preservation(mat, 2.0 * mat, 5) == 1.0

    def test_matches_brute_force_oracle(self):
        rng = make_rng(7)
        orig = rng.normal(size=(50, 8))
        rec = orig[rng.permutation(50)]
        got = neighbor_preservation(orig, rec, 10)
        assert got == pytest.approx(_brute_force_preservation(orig, rec, 10), abs=1e-12)

    def test_joint_rotation_invariance(self):
        rng = make_rng(8)
        orig = rng.normal(size=(30, 6))
        rec = orig + 0.05 * rng.normal(size=(30, 6))
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        base = neighbor_preservation(orig, rec, 5)
        rotated = neighbor_preservation(orig @ q, rec @ q, 5)
        assert rotated == pytest.approx(base, abs=1e-12)

    def test_k_bounds(self):
        mat = make_rng(9).normal(size=(10, 3))
        with pytest.raises(ValueError):
            neighbor_preservation(mat, mat, 10)
        with pytest.raises(ValueError):
            neighbor_preservation(mat, mat, 0)

    def test_shape_mismatch(self):
        rng = make_rng(10)
        with pytest.raises(ValueError):
            neighbor_preservation(rng.normal(size=(5, 3)), rng.normal(size=(6, 3)), 2)


class TestCodeGroups:
    def _book(self, codes, labels):
        codes = np.asarray(codes)
        spec = KdSpec(int(codes.max()) + 2, codes.shape[1], codes.shape[0],
                      allow_shared_codes=True)
        return CodeBook(spec, codes, list(labels))

    def test_all_distinct_codes_are_singletons(self):
        book = self._book([[0, 0], [0, 1], [1, 0]], ["a", "b", "c"])
        report = code_groups(book)
        assert [g.size for g in report.groups] == [1, 1, 1]
        assert report.total_symbols == 3

    def test_shared_code_grouping_and_rendering(self):
        book = self._book([[3, 1, 0, 4], [3, 1, 0, 4], [2, 0, 0, 1]],
                          ["monday", "tuesday", "rock"])
        report = code_groups(book)
        assert report.groups[0].code == (3, 1, 0, 4)
        assert report.groups[0].labels == ("monday", "tuesday")
        lines = report.render_lines()
        assert lines[0] == "3-1-0-4\tmonday tuesday"

    def test_sizes_sum_to_n(self):
        rng = make_rng(11)
        codes = rng.integers(0, 3, size=(40, 2))
        book = self._book(codes, [f"w{i}" for i in range(40)])
        report = code_groups(book)
        assert sum(g.size for g in report.groups) == 40

    def test_deterministic_ordering(self):
        book = self._book([[1, 1], [0, 0], [1, 1], [0, 1], [0, 0]],
                          ["a", "b", "c", "d", "e"])
        report = code_groups(book)
        assert [g.code for g in report.groups] == [(0, 0), (1, 1), (0, 1)]

    def test_min_group_size_filter(self):
        book = self._book([[0, 0], [0, 0], [1, 1]], ["a", "b", "c"])
        report = code_groups(book)
        assert len(report.filtered(min_group_size=2)) == 1

    def test_requires_labels(self):
        spec = KdSpec(3, 2, 2)
        book = CodeBook(spec, np.zeros((2, 2), dtype=int))
        with pytest.raises(ValueError):
            code_groups(book)

    def test_label_count_mismatch(self):
        book = self._book([[0, 0], [1, 1]], ["a", "b"])
        with pytest.raises(ValueError):
            code_groups(book, labels=["only-one"])


class TestCosineCohesion:
    def test_tight_groups_beat_global(self):
        rng = make_rng(12)
        centers = rng.normal(size=(4, 6)) * 3
        codes = np.repeat(np.arange(4), 5)[:, None]
        vectors = centers[codes[:, 0]] + 0.01 * rng.normal(size=(20, 6))
        assert mean_intra_group_cosine(vectors, codes) > mean_pairwise_cosine(vectors)

    def test_all_singletons_rejected(self):
        rng = make_rng(13)
        vectors = rng.normal(size=(4, 3))
        codes = np.arange(4)[:, None]
        with pytest.raises(ValueError):
            mean_intra_group_cosine(vectors, codes)

    def test_pairwise_mean_matches_loops(self):
        rng = make_rng(14)
        vectors = rng.normal(size=(8, 4))
        unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        expected = np.mean([unit[i] @ unit[j] for i in range(8) for j in range(i + 1, 8)])
        assert mean_pairwise_cosine(vectors) == pytest.approx(float(expected), rel=1e-12)

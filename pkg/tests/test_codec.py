import math

import numpy as np
import pytest

from conftest import max_rel_err
from kdcode.codec import (
    CodeBook,
    CodeLogits,
    KdSpec,
    TemperatureSchedule,
    code_space_utilization,
    collision_free_probability,
    collision_free_probability_detail,
    extract_codes,
    format_code,
    init_code_logits,
    min_code_dim,
    parse_code,
    random_codebook,
    ste_backward,
    ste_forward,
)
from kdcode.numerics import finite_diff_gradient, make_rng, stable_softmax


class TestKdSpec:
    def test_valid(self):
        spec = KdSpec(50, 10, 10000)
        assert (spec.K, spec.D, spec.N) == (50, 10, 10000)
        assert spec.covers_all_symbols

    def test_rejects_undersized_code_space(self):
        with pytest.raises(ValueError, match="compact-code"):
            KdSpec(2, 3, 10000)

    def test_shared_codes_opt_in(self):
        spec = KdSpec(100, 1, 10000, allow_shared_codes=True)
        assert not spec.covers_all_symbols

    def test_boundary_compact(self):
        KdSpec(2, 3, 8)  # exactly K**D symbols

    @pytest.mark.parametrize("k,d,n", [(1, 1, 1), (2, 0, 1), (2, 1, 0)])
    def test_rejects_degenerate(self, k, d, n):
        with pytest.raises(ValueError):
            KdSpec(k, d, n)

    def test_huge_dimensions_do_not_overflow(self):
        KdSpec(2, 10_000, 2**62)


class TestMinCodeDim:
    def test_paper_default_vocab(self):
        assert min_code_dim(10000, 50) == 3  # 50^2 = 2500 < 10^4 <= 50^3

    def test_single_symbol(self):
        assert min_code_dim(1, 2) == 1  # floor of one dimension

    def test_exact_power(self):
        assert min_code_dim(2**20, 2) == 20

    def test_rejects_small_k(self):
        with pytest.raises(ValueError):
            min_code_dim(100, 1)

    def test_no_overflow_near_int64(self):
        assert min_code_dim(2**62, 2) == 62

    def test_exact_for_all_small_inputs(self):
        # brute force: smallest D with K**D >= N for every N <= 10^4, K in 2..64
        for k in range(2, 65):
            d, cap = 1, k
            for n in range(1, 10001):
                while cap < n:
                    cap *= k
                    d += 1
                assert min_code_dim(n, k) == d
            d, cap = 1, k


class TestCollisionFreeProbability:
    def test_billion_symbols_footnote_value(self):
        est = collision_free_probability_detail(10**9, 100, 10)
        assert est.method == "exponential-approximation"
        assert abs(est.probability - 0.995) <= 0.0005

    def test_single_symbol_cannot_collide(self):
        assert collision_free_probability(1, 3, 2) == 1.0

    def test_exact_birthday_product(self):
        est = collision_free_probability_detail(2, 2, 2)
        assert est.method == "exact-product"
        assert est.probability == pytest.approx(0.75, rel=1e-12)

    def test_overfull_space_is_zero(self):
        assert collision_free_probability(10, 2, 3) == 0.0

    def test_matches_exact_oracle_on_grid(self):
        for k in (2, 3, 5):
            for d in (1, 2, 3, 4):
                space = k**d
                for n in range(1, min(space, 40) + 1):
                    oracle = 1.0
                    for i in range(n):
                        oracle *= 1.0 - i / space
                    got = collision_free_probability(n, k, d)
                    assert got == pytest.approx(oracle, rel=1e-10, abs=1e-15)

    def test_monotonicity(self):
        k = 3
        for d in (2, 3, 4):
            values = [collision_free_probability(n, k, d) for n in range(1, 30)]
            assert all(a >= b for a, b in zip(values, values[1:]))
        for n in (5, 17):
            values = [collision_free_probability(n, k, d) for d in range(2, 6)]
            assert all(a <= b for a, b in zip(values, values[1:]))

    def test_gigantic_space_underflows_to_one(self):
        assert collision_free_probability(1000, 2, 100000) == 1.0


class TestCodeSpaceUtilization:
    def test_compact_is_exactly_one(self):
        assert code_space_utilization(32, 2, 5) == 1.0
        assert code_space_utilization(343, 7, 3) == 1.0

    def test_hundred_bit_binary(self):
        got = code_space_utilization(10000, 2, 100)
        assert got == pytest.approx(10000 / 2**100, rel=1e-10)

    def test_paper_default_configuration(self):
        got = code_space_utilization(10000, 50, 10)
        assert got == pytest.approx(1.024e-13, rel=1e-12)

    def test_rejects_overfull(self):
        with pytest.raises(ValueError):
            code_space_utilization(9, 2, 3)


class TestTemperatureSchedule:
    def test_start_value(self):
        assert TemperatureSchedule(1.0, 1.0).at(0) == 1.0

    def test_decay_formula(self):
        assert TemperatureSchedule(1.0, 1.0).at(9) == pytest.approx(0.1, rel=1e-15)

    def test_constant_mode(self):
        sched = TemperatureSchedule(0.5, 1.0, "constant")
        assert sched.at(0) == 0.5
        assert sched.at(10**6) == 0.5

    def test_always_positive(self):
        sched = TemperatureSchedule(2.0, 5.0)
        assert all(sched.at(t) > 0 for t in (0, 1, 10, 10**9))

    def test_validation(self):
        with pytest.raises(ValueError):
            TemperatureSchedule(0.0, 1.0)
        with pytest.raises(ValueError):
            TemperatureSchedule(1.0, -1.0)
        with pytest.raises(ValueError):
            TemperatureSchedule(1.0, 1.0, "warm")
        with pytest.raises(ValueError):
            TemperatureSchedule().at(-1)


class TestSteForward:
    def test_hand_softmax_evaluation(self):
        hard, soft = ste_forward([2.0, 1.0, 0.0], 1.0)
        np.testing.assert_array_equal(hard, [1.0, 0.0, 0.0])
        z = math.exp(2) + math.exp(1) + 1.0
        np.testing.assert_allclose(soft, [math.exp(2) / z, math.exp(1) / z, 1.0 / z], rtol=1e-12)

    def test_tie_goes_to_lowest_index(self):
        hard, soft = ste_forward([0.0, 0.0], 0.37)
        np.testing.assert_array_equal(hard, [1.0, 0.0])
        np.testing.assert_array_equal(soft, [0.5, 0.5])

    def test_cold_limit_matches_hard(self):
        hard, soft = ste_forward([-5.0, 10.0], 0.1)
        np.testing.assert_array_equal(hard, [0.0, 1.0])
        np.testing.assert_allclose(soft, hard, atol=1e-12)

    def test_hard_is_always_exact_one_hot(self):
        rng = make_rng(5)
        for temperature in (1e-3, 0.5, 1.0, 37.0):
            logits = rng.normal(0, 3, size=(40, 6))
            hard, soft = ste_forward(logits, temperature)
            assert np.all((hard == 0.0) | (hard == 1.0))
            np.testing.assert_array_equal(hard.sum(axis=-1), 1.0)
            # argmax agreement between logits, hard, and soft
            np.testing.assert_array_equal(np.argmax(hard, -1), np.argmax(logits, -1))
            np.testing.assert_array_equal(np.argmax(soft, -1), np.argmax(logits, -1))


class TestSteBackward:
    def test_constant_upstream_is_killed(self):
        soft = stable_softmax([0.3, -1.2, 2.0], 1.0)
        grad = ste_backward(soft, [5.0, 5.0, 5.0], 1.0)
        assert np.max(np.abs(grad)) <= 1e-12

    def test_hand_jacobian(self):
        np.testing.assert_allclose(
            ste_backward([0.5, 0.5], [1.0, 0.0], 1.0), [0.25, -0.25], rtol=1e-15
        )

    def test_matches_finite_differences_100_trials(self):
        rng = make_rng(17)
        for _ in range(100):
            k = int(rng.integers(2, 7))
            logits = rng.normal(0, 2, size=k)
            upstream = rng.normal(0, 1, size=k)
            temperature = float(rng.uniform(0.1, 3.0))
            soft = stable_softmax(logits, temperature)
            analytic = ste_backward(soft, upstream, temperature)
            numeric = finite_diff_gradient(
                lambda l: float(upstream @ stable_softmax(l, temperature)), logits
            )
            assert max_rel_err(analytic, numeric) <= 1e-4

    def test_temperature_required_positive(self):
        with pytest.raises(ValueError):
            ste_backward([0.5, 0.5], [1.0, 0.0], 0.0)


class TestExtractCodes:
    def test_argmax_with_tie_rule(self):
        spec = KdSpec(3, 2, 1)
        logits = CodeLogits(spec, np.array([[[0.0, 5.0, 1.0], [2.0, 2.0, 2.0]]]))
        book = extract_codes(logits)
        np.testing.assert_array_equal(book.codes, [[1, 0]])

    def test_idempotent(self):
        rng = make_rng(3)
        spec = KdSpec(8, 4, 100, allow_shared_codes=True)
        logits = init_code_logits(spec, rng)
        first = extract_codes(logits)
        second = extract_codes(logits)
        np.testing.assert_array_equal(first.codes, second.codes)

    def test_components_in_range(self):
        rng = make_rng(11)
        spec = KdSpec(8, 4, 100, allow_shared_codes=True)
        book = extract_codes(CodeLogits(spec, rng.normal(size=(100, 4, 8))))
        assert book.codes.min() >= 0
        assert book.codes.max() < 8

    def test_invariant_under_row_shifts(self):
        rng = make_rng(29)
        spec = KdSpec(5, 3, 20)
        values = rng.normal(size=(20, 3, 5))
        shifts = rng.normal(size=(20, 3, 1)) * 10
        a = extract_codes(CodeLogits(spec, values))
        b = extract_codes(CodeLogits(spec, values + shifts))
        np.testing.assert_array_equal(a.codes, b.codes)


class TestCodeBookAndRendering:
    def test_codebook_validation(self):
        spec = KdSpec(4, 2, 3)
        with pytest.raises(ValueError):
            CodeBook(spec, np.array([[0, 1]]))  # wrong N
        with pytest.raises(ValueError):
            CodeBook(spec, np.array([[0, 4], [0, 0], [1, 1]]))  # component >= K
        with pytest.raises(ValueError):
            CodeBook(spec, np.zeros((3, 2), dtype=int), labels=["a", "b"])  # label count
        with pytest.raises(ValueError):
            CodeBook(spec, np.zeros((3, 2), dtype=int), labels=["a", "a", "b"])

    def test_format_and_parse_round_trip(self):
        assert format_code((3, 1, 0, 4)) == "3-1-0-4"
        assert parse_code("3-1-0-4") == (3, 1, 0, 4)
        with pytest.raises(ValueError):
            parse_code("3--1")

    def test_logit_shape_validation(self):
        with pytest.raises(ValueError):
            CodeLogits(KdSpec(3, 2, 2), np.zeros((2, 2, 2)))

    def test_random_codebook_is_valid_and_seeded(self):
        spec = KdSpec(6, 3, 50)
        a = random_codebook(spec, make_rng(4))
        b = random_codebook(spec, make_rng(4))
        np.testing.assert_array_equal(a.codes, b.codes)
        assert a.codes.shape == (50, 3)
        assert a.codes.max() < 6

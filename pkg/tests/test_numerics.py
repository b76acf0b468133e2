import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdcode.numerics import (
    as_float_array,
    finite_diff_gradient,
    make_rng,
    one_hot,
    sgd_step,
    sigmoid,
    stable_softmax,
)


class TestStableSoftmax:
    def test_symmetric_pair_is_uniform(self):
        out = stable_softmax([0.0, 0.0], 1.0)
        assert out[0] == 0.5 and out[1] == 0.5

    def test_two_logits_half_temperature(self):
        # hand evaluation: [e^2, 1] / (e^2 + 1)
        e2 = math.exp(2.0)
        expected = np.array([e2 / (e2 + 1.0), 1.0 / (e2 + 1.0)])
        out = stable_softmax([1.0, 0.0], 0.5)
        np.testing.assert_allclose(out, expected, rtol=1e-14)

    def test_high_temperature_approaches_uniform(self):
        out = stable_softmax([3.0, 1.0, -2.0], 1000.0)
        np.testing.assert_allclose(out, 1.0 / 3.0, atol=1e-3)

    def test_huge_logits_do_not_overflow(self):
        out = stable_softmax([1e300, 0.0, -1e300], 1.0)
        assert np.all(np.isfinite(out))
        assert out[0] == 1.0

    @pytest.mark.parametrize("bad_t", [0.0, -1.0, float("nan"), float("inf")])
    def test_rejects_bad_temperature(self, bad_t):
        with pytest.raises(ValueError):
            stable_softmax([1.0, 2.0], bad_t)

    @pytest.mark.parametrize("bad", [[float("nan"), 0.0], [float("inf"), 1.0]])
    def test_rejects_non_finite_logits(self, bad):
        with pytest.raises(ValueError):
            stable_softmax(bad, 1.0)

    @given(
        logits=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8),
        temperature=st.floats(1e-9, 1e9),
    )
    @settings(max_examples=200, deadline=None)
    def test_probability_vector_properties(self, logits, temperature):
        out = stable_softmax(logits, temperature)
        assert np.all(out >= 0.0)
        assert abs(out.sum() - 1.0) <= 1e-12

    @given(
        # bounded so the shifted sum itself stays exactly representable to
        # ~1e-13; beyond that the addition, not the softmax, perturbs inputs
        logits=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=6),
        shift=st.floats(-1e3, 1e3),
    )
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, logits, shift):
        base = stable_softmax(logits, 1.0)
        shifted = stable_softmax(np.asarray(logits) + shift, 1.0)
        assert np.max(np.abs(base - shifted)) <= 1e-12

    @given(
        logits=st.lists(st.floats(-100, 100), min_size=2, max_size=6),
        temperature=st.floats(1e-3, 1e3),
    )
    @settings(max_examples=200, deadline=None)
    def test_temperature_is_logit_scaling(self, logits, temperature):
        arr = np.asarray(logits)
        a = stable_softmax(arr, temperature)
        b = stable_softmax(arr / temperature, 1.0)
        assert np.array_equal(a, b)

    @given(logits=st.lists(st.integers(-50, 50), min_size=2, max_size=8),
           temperature=st.floats(1e-2, 1e2))
    @settings(max_examples=200, deadline=None)
    def test_argmax_preserved(self, logits, temperature):
        # integer logits: gaps are exact, so scaled gaps stay resolvable and
        # exact ties keep the lowest-index winner on both sides
        out = stable_softmax(np.asarray(logits, dtype=float), temperature)
        assert int(np.argmax(out)) == int(np.argmax(logits))

    def test_batched_axis(self):
        arr = np.array([[0.0, 0.0], [2.0, 0.0]])
        out = stable_softmax(arr, 1.0)
        assert out.shape == (2, 2)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


class TestSgdStep:
    def test_zero_gradient_is_identity(self):
        np.testing.assert_array_equal(sgd_step([1.0, 2.0], [0.0, 0.0], 0.1), [1.0, 2.0])

    def test_unit_identity(self):
        np.testing.assert_array_equal(sgd_step([1.0], [2.0], 0.5), [0.0])

    def test_hand_arithmetic(self):
        np.testing.assert_allclose(
            sgd_step([0.5, -0.5], [1.0, -1.0], 0.1), [0.4, -0.4], rtol=1e-15
        )

    def test_zero_learning_rate_is_noop(self):
        np.testing.assert_array_equal(sgd_step([3.0], [5.0], 0.0), [3.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sgd_step([1.0, 2.0], [1.0], 0.1)

    def test_negative_learning_rate(self):
        with pytest.raises(ValueError):
            sgd_step([1.0], [1.0], -0.1)


class TestFiniteDiffGradient:
    def test_square(self):
        grad = finite_diff_gradient(lambda x: float(x[0] ** 2), [3.0])
        np.testing.assert_allclose(grad, [6.0], atol=1e-6)

    def test_constant(self):
        grad = finite_diff_gradient(lambda x: 7.5, [1.0, -2.0, 0.3])
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_product(self):
        grad = finite_diff_gradient(lambda x: float(x[0] * x[1]), [2.0, 5.0])
        np.testing.assert_allclose(grad, [5.0, 2.0], atol=1e-6)

    def test_matrix_shaped_point(self):
        point = np.array([[1.0, 2.0], [3.0, 4.0]])
        grad = finite_diff_gradient(lambda x: float(np.sum(x**2)), point)
        np.testing.assert_allclose(grad, 2 * point, atol=1e-5)

    def test_non_finite_function(self):
        with pytest.raises(ValueError):
            finite_diff_gradient(lambda x: float("nan"), [1.0])

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_gradient(lambda x: 0.0, [1.0], step=0.0)


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(123).normal(size=100)
        b = make_rng(123).normal(size=100)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = make_rng(1).normal(size=100)
        b = make_rng(2).normal(size=100)
        assert not np.array_equal(a, b)

    def test_counter_based_bit_generator(self):
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)


class TestSmallHelpers:
    def test_one_hot(self):
        out = one_hot(np.array([2, 0]), 3)
        np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])

    def test_one_hot_out_of_range(self):
        with pytest.raises(ValueError):
            one_hot(np.array([3]), 3)

    def test_sigmoid_extremes(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert out[1] == 0.5
        assert 0.0 <= out[0] < 1e-300
        assert out[2] == 1.0  # saturates in float64, stays finite

    def test_as_float_array_rejects_nan(self):
        with pytest.raises(ValueError):
            as_float_array([1.0, float("nan")])

"""Margin-loss family: values, reductions, properties, gradient checks."""

import math

import numpy as np
import pytest

from helpers import flatten_instance, loss_value_fn, random_classifier_instance
from ummlearn.errors import (
    DegenerateNormError,
    DomainError,
    LabelError,
    ParameterError,
)
from ummlearn.gradcheck import central_difference, relative_errors
from ummlearn.margin_loss import (
    ClassifierState,
    angular_margin_loss,
    angular_variant_i,
    angular_variant_ii,
    class_margin_from_uncertainty,
    large_margin_softmax_loss,
    psi,
    softmax_loss,
    uncertainty_weighted_margin_loss,
)
from ummlearn.numerics import M_MAX

# Precomputed on a 100001-point uniform grid over [0, pi] before the
# implementation: max |variant_i(cos t, 2) - (1 - 2 t / pi)|.
TRIANGLE_DEVIATION_ORACLE = 0.2829540921741458


class TestSoftmaxLoss:
    def test_equal_logits_two_classes(self):
        state = ClassifierState(np.array([[1.0, 0.0], [0.0, 1.0]]))
        f = np.array([1.0, 1.0])
        res = softmax_loss(state, f, 0)
        assert res.value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_saturated_correct_class(self):
        # logits (10, -10, -10) via orthogonal unit rows
        state = ClassifierState(np.eye(3))
        f = np.array([10.0, -10.0, -10.0])
        res = softmax_loss(state, f, 0)
        assert res.value == pytest.approx(0.0, abs=1e-4)

    def test_label_out_of_range(self):
        state = ClassifierState(np.eye(2))
        with pytest.raises(LabelError):
            softmax_loss(state, np.ones(2), 5)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            state, f, y = random_classifier_instance(rng)
            res = softmax_loss(state, f, y)
            analytic = np.concatenate([res.grad_weights.ravel(), res.grad_feature])
            numeric = central_difference(
                loss_value_fn(softmax_loss, 4, 6, y), flatten_instance(state, f)
            )
            assert relative_errors(analytic, numeric).max() < 1e-4


class TestPsi:
    def test_alpha_zero(self):
        for m in range(1, M_MAX + 1):
            assert psi(0.0, m) == pytest.approx(1.0, abs=1e-12)

    def test_alpha_pi_frozen(self):
        # last-segment evaluation gives -(2m - 1); verified against the
        # left limit below
        for m in range(1, M_MAX + 1):
            assert psi(math.pi, m) == pytest.approx(-(2 * m - 1), abs=1e-9)
            assert psi(math.pi - 1e-9, m) == pytest.approx(-(2 * m - 1), abs=1e-6)

    def test_m1_reduces_to_cos(self):
        rng = np.random.default_rng(4)
        for a in rng.uniform(0, math.pi, 50):
            assert psi(float(a), 1) == pytest.approx(math.cos(a), abs=1e-12)

    def test_monotone_decreasing(self):
        grid = np.linspace(0.0, math.pi, 10_000)
        for m in range(1, M_MAX + 1):
            vals = np.array([psi(float(a), m) for a in grid])
            assert np.all(np.diff(vals) <= 1e-12)

    def test_segment_continuity(self):
        eps = 1e-10
        for m in range(2, M_MAX + 1):
            for r in range(1, m):
                edge = r * math.pi / m
                left = psi(edge - eps, m)
                right = psi(edge + eps, m)
                assert abs(left - right) < 1e-9

    def test_domain_error(self):
        with pytest.raises(DomainError):
            psi(-0.1, 2)
        with pytest.raises(DomainError):
            psi(math.pi + 0.1, 2)


class TestClassMargin:
    def test_zero(self):
        assert class_margin_from_uncertainty(0.0) == 1

    def test_floor_of_three(self):
        assert class_margin_from_uncertainty(6.0) == 3

    def test_clamped(self):
        assert class_margin_from_uncertainty(100.0) == M_MAX

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            class_margin_from_uncertainty(-1.0)


class TestLargeMarginSoftmax:
    def test_m1_equals_softmax(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            state, f, y = random_classifier_instance(rng)
            plain = softmax_loss(state, f, y)
            lm = large_margin_softmax_loss(state, f, y, 1)
            assert lm.value == pytest.approx(plain.value, abs=1e-12)
            np.testing.assert_allclose(lm.grad_weights, plain.grad_weights, atol=1e-10)
            np.testing.assert_allclose(lm.grad_feature, plain.grad_feature, atol=1e-10)

    def test_aligned_feature_uses_full_norm_product(self):
        # f parallel to w_y: psi(0) = 1, so the true-class logit is the
        # norm product and the loss sits below the rival-driven level
        w = np.array([[2.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        state = ClassifierState(w)
        f = np.array([3.0, 0.0])
        res = large_margin_softmax_loss(state, f, 0, 3)
        plain = softmax_loss(state, f, 0)
        assert res.value == pytest.approx(plain.value, abs=1e-6)

    def test_penalizes_true_class(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            state, f, y = random_classifier_instance(rng)
            plain = softmax_loss(state, f, y)
            for m in (2, 3, 4):
                lm = large_margin_softmax_loss(state, f, y, m)
                assert lm.value >= plain.value - 1e-10

    @pytest.mark.parametrize("m", [2, 3])
    def test_gradients_match_finite_differences(self, m):
        rng = np.random.default_rng(100 + m)
        for _ in range(30):
            state, f, y = random_classifier_instance(rng, margin=m)
            res = large_margin_softmax_loss(state, f, y, m)
            analytic = np.concatenate([res.grad_weights.ravel(), res.grad_feature])
            numeric = central_difference(
                loss_value_fn(lambda s, v, yy: large_margin_softmax_loss(s, v, yy, m), 4, 6, y),
                flatten_instance(state, f),
            )
            assert relative_errors(analytic, numeric).max() < 1e-4

    def test_degenerate_feature_norm(self):
        state = ClassifierState(np.eye(2))
        with pytest.raises(DegenerateNormError):
            large_margin_softmax_loss(state, np.zeros(2), 0, 2)

    def test_degenerate_weight_norm(self):
        state = ClassifierState(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(DegenerateNormError):
            large_margin_softmax_loss(state, np.ones(2), 0, 2)

    def test_margin_out_of_range(self):
        state = ClassifierState(np.eye(2))
        with pytest.raises(ParameterError):
            large_margin_softmax_loss(state, np.ones(2), 0, 9)


class TestUncertaintyWeightedLoss:
    def test_ccdf_one_m1_equals_softmax(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            state, f, y = random_classifier_instance(rng)
            plain = softmax_loss(state, f, y)
            uw = uncertainty_weighted_margin_loss(state, f, y, 1, 1.0)
            assert uw.value == pytest.approx(plain.value, abs=1e-12)

    def test_ccdf_one_equals_large_margin(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            state, f, y = random_classifier_instance(rng, margin=3)
            lm = large_margin_softmax_loss(state, f, y, 3)
            uw = uncertainty_weighted_margin_loss(state, f, y, 3, 1.0)
            assert uw.value == pytest.approx(lm.value, abs=1e-12)
            np.testing.assert_allclose(uw.grad_weights, lm.grad_weights, atol=1e-12)

    def test_ccdf_zero_m1_zeroes_true_logit(self):
        state = ClassifierState(np.array([[1.0, 0.0], [0.0, 1.0]]))
        f = np.array([2.0, 1.0])
        uw = uncertainty_weighted_margin_loss(state, f, 0, 1, 0.0)
        # true-class contribution is exp(0); rival logit is w_1 . f = 1
        expected = -math.log(1.0 / (1.0 + math.exp(1.0)))
        assert uw.value == pytest.approx(expected, abs=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            state, f, y = random_classifier_instance(rng, margin=2)
            res = uncertainty_weighted_margin_loss(state, f, y, 2, 0.5)
            analytic = np.concatenate([res.grad_weights.ravel(), res.grad_feature])
            numeric = central_difference(
                loss_value_fn(
                    lambda s, v, yy: uncertainty_weighted_margin_loss(s, v, yy, 2, 0.5), 4, 6, y
                ),
                flatten_instance(state, f),
            )
            assert relative_errors(analytic, numeric).max() < 1e-4

    def test_ccdf_out_of_range(self):
        state = ClassifierState(np.eye(2))
        with pytest.raises(ParameterError):
            uncertainty_weighted_margin_loss(state, np.ones(2), 0, 1, 1.5)


class TestAngularVariants:
    def test_variant_i_zero(self):
        assert angular_variant_i(0.0, 2.0) == 0.0

    def test_variant_i_at_one_frozen(self):
        # direct substitution: sqrt((1+2)/(2*(1+0))) = sqrt(3/2)
        assert angular_variant_i(1.0, 2.0) == pytest.approx(math.sqrt(1.5), abs=1e-12)

    def test_variant_i_odd(self):
        rng = np.random.default_rng(15)
        for x in rng.uniform(0, 1, 50):
            for a in (0.5, 2.0, 3.0):
                assert angular_variant_i(float(-x), a) == pytest.approx(
                    -angular_variant_i(float(x), a), abs=1e-15
                )

    def test_variant_i_triangle_deviation_frozen(self):
        theta = np.linspace(0.0, math.pi, 100_001)
        tri = 1.0 - 2.0 * theta / math.pi
        dev = max(
            abs(angular_variant_i(math.cos(t), 2.0) - w) for t, w in zip(theta, tri)
        )
        assert dev == pytest.approx(TRIANGLE_DEVIATION_ORACLE, abs=1e-9)

    def test_variant_ii_endpoints_frozen(self):
        assert angular_variant_ii(-1.0, 3.0) == pytest.approx(-1.0, abs=1e-12)
        assert angular_variant_ii(1.0, 3.0) == pytest.approx(-math.cos(3.0), abs=1e-12)

    def test_variant_ii_monotone_grid_scan(self):
        grid = np.linspace(-1.0, 1.0, 20_001)
        vals = [angular_variant_ii(float(c), 3.0) for c in grid]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            angular_variant_i(1.5, 2.0)
        with pytest.raises(ParameterError):
            angular_variant_ii(0.0, -1.0)


class TestAngularMarginLoss:
    @pytest.mark.parametrize("variant", ["i", "ii"])
    def test_gradients_match_finite_differences(self, variant):
        rng = np.random.default_rng(31 if variant == "i" else 32)
        for _ in range(25):
            state, f, y = random_classifier_instance(rng)
            res = angular_margin_loss(state, f, y, variant=variant)
            analytic = np.concatenate([res.grad_weights.ravel(), res.grad_feature])
            numeric = central_difference(
                loss_value_fn(
                    lambda s, v, yy: angular_margin_loss(s, v, yy, variant=variant), 4, 6, y
                ),
                flatten_instance(state, f),
            )
            assert relative_errors(analytic, numeric).max() < 1e-4

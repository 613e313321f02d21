"""Numeric kernels: forward values and analytic-vs-numeric gradients."""

import math

import numpy as np
import pytest

from artmatch import numeric
from artmatch.errors import DegenerateInputError


def central_diff(f, x, h=1e-6):
    """Independent finite-difference gradient of scalar f at vector x."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] += h
        up = f(bumped)
        bumped[i] -= 2 * h
        down = f(bumped)
        g[i] = (up - down) / (2 * h)
    return g


class TestLinear:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(numeric.linear(x, np.eye(3), np.zeros(3)), x)

    def test_hand_case(self):
        W = np.array([[1.0, 2.0], [3.0, 4.0]])
        y = numeric.linear(np.array([1.0, 1.0]), W, np.zeros(2))
        assert y.tolist() == [3.0, 7.0]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            numeric.linear(np.ones(3), np.ones((2, 2)), np.zeros(2))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        W = rng.normal(size=(5, 3))
        b = rng.normal(size=5)
        x = rng.normal(size=3)
        v = rng.normal(size=5)  # project output to a scalar: loss = v . y
        gx, gW, gb = numeric.linear_backward(x, W, v)

        fd_x = central_diff(lambda z: v @ numeric.linear(z, W, b), x)
        fd_W = central_diff(
            lambda w: v @ numeric.linear(x, w.reshape(5, 3), b), W.reshape(-1)
        ).reshape(5, 3)
        fd_b = central_diff(lambda bb: v @ numeric.linear(x, W, bb), b)
        np.testing.assert_allclose(gx, fd_x, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gW, fd_W, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gb, fd_b, rtol=1e-4, atol=1e-8)


class TestTanh:
    def test_zero(self):
        assert numeric.tanh(np.zeros(3)).tolist() == [0.0, 0.0, 0.0]

    def test_saturation(self):
        out = numeric.tanh(np.array([30.0, -30.0]))
        assert abs(out[0] - 1.0) < 1e-6 and abs(out[1] + 1.0) < 1e-6

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=6)
        v = rng.normal(size=6)
        out = numeric.tanh(x)
        analytic = numeric.tanh_backward(out, v)
        fd = central_diff(lambda z: v @ numeric.tanh(z), x)
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-8)


class TestL2Normalize:
    def test_unit_vector_fixed_point(self):
        x = np.array([1.0, 0.0, 0.0])
        np.testing.assert_array_equal(numeric.l2_normalize(x), x)

    def test_three_four_five(self):
        np.testing.assert_allclose(
            numeric.l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8], atol=1e-15
        )

    def test_near_zero_raises(self):
        with pytest.raises(DegenerateInputError):
            numeric.l2_normalize(np.zeros(4))

    def test_output_norm_tight(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            y = numeric.l2_normalize(rng.normal(size=rng.integers(1, 9)))
            assert abs(np.linalg.norm(y) - 1.0) < 1e-9

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=5) + 0.5
        v = rng.normal(size=5)
        analytic = numeric.l2_normalize_backward(x, v)
        fd = central_diff(lambda z: v @ numeric.l2_normalize(z), x)
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-8)


class TestCosine:
    def test_identical(self):
        u = np.array([0.6, 0.8, 0.0])
        assert numeric.cosine(u, u) == 1.0
        v = numeric.l2_normalize(np.array([1.0, 2.0, 2.0]))
        assert numeric.cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert numeric.cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_opposite(self):
        u = np.array([0.0, 1.0])
        assert numeric.cosine(u, -u) == -1.0

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            numeric.cosine(np.array([2.0, 0.0]), np.array([1.0, 0.0]))

    def test_clamped(self):
        u = numeric.l2_normalize(np.ones(4))
        assert -1.0 <= numeric.cosine(u, u) <= 1.0


class TestCrossEntropy:
    def test_uniform_two_way(self):
        assert numeric.cross_entropy(np.array([0.0, 0.0]), 0) == pytest.approx(
            math.log(2), abs=1e-12
        )

    def test_dominant_true_logit(self):
        x = np.array([1000.0, 0.0, 0.0])
        assert numeric.cross_entropy(x, 0) == pytest.approx(0.0, abs=1e-12)

    def test_large_logits_stable(self):
        x = np.array([1e4, 1e4 - 5.0])
        val = numeric.cross_entropy(x, 1)
        assert np.isfinite(val) and val > 0

    def test_out_of_range_label(self):
        with pytest.raises(ValueError):
            numeric.cross_entropy(np.zeros(3), 3)

    def test_nonnegative_and_zero_only_at_onehot_limit(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.normal(size=6) * 3
            assert numeric.cross_entropy(x, int(rng.integers(6))) > 0.0

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=6)
        analytic = numeric.cross_entropy_backward(x, 2)
        fd = central_diff(lambda z: numeric.cross_entropy(z, 2), x)
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-8)


class TestAdam:
    def test_zero_gradient_no_move(self):
        params = {"w": np.array([1.0, 2.0])}
        state = numeric.AdamState(lr=0.1)
        numeric.adam_step(params, {"w": np.zeros(2)}, state)
        assert params["w"].tolist() == [1.0, 2.0]

    def test_lr_zero_is_identity(self):
        rng = np.random.default_rng(6)
        params = {"w": rng.normal(size=4)}
        before = params["w"].copy()
        state = numeric.AdamState(lr=0.0)
        for _ in range(5):
            numeric.adam_step(params, {"w": rng.normal(size=4)}, state)
        np.testing.assert_array_equal(params["w"], before)

    def test_single_step_hand_recurrence(self):
        # By hand, for g=1, lr=0.1, t=1:
        #   m = 0.1, v = 0.001, m_hat = 1.0, v_hat = 1.0
        #   delta = 0.1 * 1 / (1 + 1e-8)
        params = {"w": np.array([0.5])}
        state = numeric.AdamState(lr=0.1)
        numeric.adam_step(params, {"w": np.array([1.0])}, state)
        expected = 0.5 - 0.1 * 1.0 / (1.0 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-15)
        assert state.t == 1

    def test_quadratic_bowl_descends(self):
        # Oracle: loss 0.5*||w||^2 must fall monotonically from a warm
        # start under repeated steps (convex, gradient = w).
        params = {"w": np.array([3.0, -2.0, 1.5])}
        state = numeric.AdamState(lr=0.05)
        losses = []
        for _ in range(100):
            losses.append(0.5 * float(params["w"] @ params["w"]))
            numeric.adam_step(params, {"w": params["w"].copy()}, state)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_shape_mismatch(self):
        state = numeric.AdamState(lr=0.1)
        with pytest.raises(ValueError):
            numeric.adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, state)


class TestGradCheck:
    def test_linear_function_is_exact(self):
        a = np.array([1.0, -2.0, 0.5])

        def loss_and_grad(params):
            return float(a @ params["x"]), {"x": a.copy()}

        err = numeric.grad_check(loss_and_grad, {"x": np.array([0.3, 0.7, -0.1])})
        assert err < 1e-8

    def test_detects_wrong_gradient(self):
        def loss_and_grad(params):
            return float(params["x"] @ params["x"]), {"x": params["x"]}  # missing factor 2

        err = numeric.grad_check(loss_and_grad, {"x": np.array([1.0, 2.0])})
        assert err > 1e-2

import numpy as np
import pytest
import scipy.sparse as sp

from ugd.graph import build_graph, sym_norm_adj
from ugd.nn import (AdamState, GcnLayerParams, NumericalError, adam_step, check_finite, gcn_backward,
                    gcn_layer_forward, softmax_cross_entropy)

from .helpers import central_difference, random_graph, rel_error


class TestForward:
    def test_identity_pipeline(self):
        H = np.arange(6.0).reshape(3, 2)
        out, _ = gcn_layer_forward(sp.identity(3, format="csr"), H, GcnLayerParams(np.eye(2)), "identity")
        np.testing.assert_array_equal(out, H)

    def test_zero_input(self):
        g = random_graph(5, 0)
        out, _ = gcn_layer_forward(sym_norm_adj(g), np.zeros((5, 3)), GcnLayerParams(np.ones((3, 2))))
        assert not out.any()

    def test_single_edge(self):
        a_hat = sym_norm_adj(build_graph([(0, 1)], np.zeros((2, 1))))
        out, _ = gcn_layer_forward(a_hat, np.array([[2.0, 0.0], [0.0, 2.0]]), GcnLayerParams(np.eye(2)), "identity")
        np.testing.assert_allclose(out, np.ones((2, 2)))

    def test_relu_clips(self):
        out, _ = gcn_layer_forward(sp.identity(1, format="csr"), np.array([[-1.0, 2.0]]), GcnLayerParams(np.eye(2)))
        np.testing.assert_array_equal(out, [[0.0, 2.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            gcn_layer_forward(sp.identity(2, format="csr"), np.ones((2, 3)), GcnLayerParams(np.ones((2, 2))))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            gcn_layer_forward(sp.identity(1, format="csr"), np.ones((1, 1)), GcnLayerParams(np.ones((1, 1))), "tanh")

    def test_glorot_deterministic_and_bounded(self):
        a = GcnLayerParams.glorot(5, 7, np.random.default_rng(3)).W
        b = GcnLayerParams.glorot(5, 7, np.random.default_rng(3)).W
        assert np.array_equal(a, b)
        assert np.all(np.abs(a) <= np.sqrt(6 / 12))


class TestBackward:
    def test_zero_upstream(self):
        g = random_graph(4, 1)
        params = GcnLayerParams(np.ones((3, 2)))
        _, cache = gcn_layer_forward(sym_norm_adj(g), g.X, params)
        gw, gh = gcn_backward(cache, np.zeros((4, 2)), params)
        assert not gw.any() and not gh.any()

    def test_scalar_product_rule(self):
        params = GcnLayerParams(np.array([[2.0]]))
        _, cache = gcn_layer_forward(sp.identity(1, format="csr"), np.array([[3.0]]), params, "identity")
        gw, gh = gcn_backward(cache, np.array([[1.0]]), params)
        assert gw.item() == 3.0 and gh.item() == 2.0

    def test_missing_cache(self):
        with pytest.raises(ValueError):
            gcn_backward(None, np.zeros((1, 1)), GcnLayerParams(np.zeros((1, 1))))

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("act", ["relu", "identity"])
    def test_finite_differences(self, seed, act):
        rng = np.random.default_rng(seed)
        n, din, dout = int(rng.integers(2, 7)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        g = random_graph(n, seed, p=0.5)
        a_hat = sym_norm_adj(g)
        H = rng.standard_normal((n, din))
        params = GcnLayerParams(rng.standard_normal((din, dout)))
        target = rng.standard_normal((n, dout))

        def loss():
            out, _ = gcn_layer_forward(a_hat, H, params, act)
            return float(np.sum(out * target))

        _, cache = gcn_layer_forward(a_hat, H, params, act)
        gw, gh = gcn_backward(cache, target, params)
        assert rel_error(gw, central_difference(loss, params.W)) < 1e-4
        assert rel_error(gh, central_difference(loss, H)) < 1e-4


class TestAdam:
    def test_zero_gradient(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState()
        adam_step(p, [np.zeros(2)], state, lr=0.1)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])
        assert state.t == 1

    def test_first_step_moves_by_lr(self):
        p = [np.array([0.5])]
        adam_step(p, [np.array([1.0])], AdamState(), lr=0.01)
        assert p[0][0] == pytest.approx(0.5 - 0.01, abs=1e-9)

    def test_constant_gradient_monotone(self):
        p = [np.array([0.0])]
        state = AdamState()
        seen = [0.0]
        for _ in range(2):
            adam_step(p, [np.array([1.0])], state, lr=0.01)
            seen.append(p[0][0])
        assert seen[0] > seen[1] > seen[2]

    def test_zero_lr_is_identity(self):
        rng = np.random.default_rng(0)
        p = [rng.standard_normal((3, 2))]
        before = p[0].copy()
        adam_step(p, [rng.standard_normal((3, 2))], AdamState(), lr=0.0, weight_decay=0.1)
        np.testing.assert_array_equal(p[0], before)

    def test_weight_decay_is_l2_gradient(self):
        a, b = [np.array([2.0])], [np.array([2.0])]
        adam_step(a, [np.array([0.0])], AdamState(), lr=0.01, weight_decay=0.5)
        adam_step(b, [np.array([1.0])], AdamState(), lr=0.01)
        np.testing.assert_allclose(a[0], b[0])

    def test_moments_nonnegative(self):
        state = AdamState()
        p = [np.zeros(3)]
        for g in ([1.0, -1.0, 0.0], [-3.0, 2.0, 5.0]):
            adam_step(p, [np.array(g)], state, lr=0.1)
        assert np.all(state.v[0] >= 0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState(), lr=0.1)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((3, 2)), np.array([0, 1, 0]), np.ones(3, bool))
        assert loss == pytest.approx(np.log(2))

    def test_saturated(self):
        logits = np.array([[50.0, 0.0], [0.0, 50.0]])
        loss, _ = softmax_cross_entropy(logits, np.array([0, 1]), np.ones(2, bool))
        assert loss < 1e-12

    def test_unmasked_rows_have_zero_gradient(self):
        _, grad = softmax_cross_entropy(np.ones((3, 4)), np.array([0, 1, 2]), np.array([True, False, True]))
        assert not grad[1].any()

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 2)), np.array([0, 1]), np.zeros(2, bool))

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((3, 4))
        labels = rng.integers(0, 4, 3)
        mask = np.array([True, rng.random() < 0.5, True])
        _, grad = softmax_cross_entropy(logits, labels, mask)
        numeric = central_difference(lambda: softmax_cross_entropy(logits, labels, mask)[0], logits)
        assert rel_error(grad, numeric) < 1e-4


def test_check_finite():
    with pytest.raises(NumericalError):
        check_finite(np.array([1.0, np.nan]), "x")

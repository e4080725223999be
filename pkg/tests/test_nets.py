import math

import numpy as np
import pytest

from amp2d.checks import check_grads
from amp2d.nets import (GaussianPolicy, Mlp, MlpSpec, net_from_arrays,
                        net_to_arrays, sgd_momentum_step)


def manual_forward(net, x):
    """Independent re-implementation with explicit loops."""
    a = list(x)
    for li in range(net.n_layers):
        W, b = net.weights[li], net.biases[li]
        z = [sum(W[o][i] * a[i] for i in range(len(a))) + b[o]
             for o in range(W.shape[0])]
        a = [max(v, 0.0) for v in z] if li < net.n_layers - 1 else z
    return np.array(a)


class TestForward:
    def test_zero_weights_give_bias(self, rng):
        net = Mlp(MlpSpec(4, (), 2), rng)
        net.weights[0][:] = 0.0
        net.biases[0][:] = [0.5, -1.5]
        for _ in range(5):
            y = net(rng.normal(size=4))
            np.testing.assert_array_equal(y, [0.5, -1.5])

    def test_one_by_one_affine(self, rng):
        net = Mlp(MlpSpec(1, (), 1), rng)
        net.weights[0][:] = 2.5
        net.biases[0][:] = 0.3
        assert net(np.array([1.2]))[0] == pytest.approx(2.5 * 1.2 + 0.3, abs=1e-15)

    def test_matches_independent_matrix_oracle(self, rng):
        net = Mlp(MlpSpec(5, (7, 6), 3), rng)
        for _ in range(10):
            x = rng.normal(size=5)
            np.testing.assert_allclose(net(x), manual_forward(net, x), atol=1e-12)

    def test_dimension_mismatch_rejected(self, rng):
        net = Mlp(MlpSpec(5, (4,), 2), rng)
        with pytest.raises(ValueError):
            net(np.zeros(6))

    def test_batched_equals_single(self, rng):
        net = Mlp(MlpSpec(3, (8,), 2), rng)
        xs = rng.normal(size=(6, 3))
        batched = net(xs)
        for i in range(6):
            np.testing.assert_allclose(batched[i], net(xs[i]), atol=1e-12)


class TestGradients:
    def test_linear_net_at_minimum_zero_grads(self, rng):
        net = Mlp(MlpSpec(2, (), 1), rng)
        x = rng.normal(size=(8, 2))
        target = net(x)[:, 0]  # the net itself is the minimizer
        y, cache = net.forward(x)
        gw, gb, _ = net.backward(cache, (2.0 / 8) * (y[:, 0] - target)[:, None])
        assert np.all(gw[0] == 0.0) and np.all(gb[0] == 0.0)

    def test_stale_cache_rejected(self, rng):
        net = Mlp(MlpSpec(3, (4,), 2), rng)
        _, cache = net.forward(rng.normal(size=(5, 3)))
        with pytest.raises(ValueError):
            net.backward(cache, np.zeros((4, 2)))

    def test_finite_difference_suite(self):
        for result in check_grads(seed=0, points=20):
            assert result.passed, result.line()

    def test_input_gradient_linear_net_equals_weights(self, rng):
        net = Mlp(MlpSpec(4, (), 1), rng)
        g = net.input_gradient(rng.normal(size=4))
        np.testing.assert_array_equal(g, net.weights[0][0])

    def test_input_gradient_piecewise_constant(self, rng):
        net = Mlp(MlpSpec(4, (8, 6), 1), rng)
        x = rng.normal(size=4)
        g1 = net.input_gradient(x)
        g2 = net.input_gradient(x + 1e-9)
        np.testing.assert_array_equal(g1, g2)

    def test_input_gradient_requires_scalar_output(self, rng):
        net = Mlp(MlpSpec(4, (8,), 2), rng)
        with pytest.raises(ValueError):
            net.input_gradient(np.zeros(4))

    def test_grad_norm_linear_closed_form(self, rng):
        net = Mlp(MlpSpec(5, (), 1), rng)
        w = net.weights[0][0]
        penalty, gws, gbs = net.grad_norm_param_grads(rng.normal(size=(3, 5)))
        assert penalty == pytest.approx(float(w @ w), abs=1e-14)
        np.testing.assert_allclose(gws[0][0], 2.0 * w, atol=1e-14)
        assert np.all(gbs[0] == 0.0)

    def test_grad_norm_zero_network(self, rng):
        net = Mlp(MlpSpec(4, (6,), 1), rng)
        for W in net.weights:
            W[:] = 0.0
        penalty, gws, _ = net.grad_norm_param_grads(rng.normal(size=(2, 4)))
        assert penalty == 0.0
        for g in gws:
            assert np.all(g == 0.0)


class TestGaussianPolicy:
    def test_logprob_at_mean_unit_sigma(self, rng):
        d = 3
        pol = GaussianPolicy(Mlp(MlpSpec(2, (), d), rng), np.ones(d))
        mean = np.zeros(d)
        assert pol.log_prob(mean, mean) == pytest.approx(
            -0.5 * d * math.log(2 * math.pi), abs=1e-12)

    def test_small_sigma_sample_near_mean(self, rng):
        pol = GaussianPolicy(Mlp(MlpSpec(2, (), 2), rng), 1e-9)
        x = rng.normal(size=2)
        mean = pol.net(x)
        action, _ = pol.sample(x, rng)
        np.testing.assert_allclose(action, mean, atol=1e-7)

    def test_monte_carlo_moments(self, rng):
        sigma = np.array([0.5, 2.0])
        pol = GaussianPolicy(Mlp(MlpSpec(2, (), 2), rng), sigma)
        x = rng.normal(size=2)
        mean = pol.net(x)
        n = 100_000
        samples = np.array([pol.sample(x, rng)[0] for _ in range(n)])
        se_mean = sigma / math.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - mean) < 3 * se_mean)
        se_std = sigma / math.sqrt(2 * (n - 1))
        assert np.all(np.abs(samples.std(axis=0) - sigma) < 3 * se_std)

    def test_sigma_must_be_positive(self, rng):
        with pytest.raises(ValueError):
            GaussianPolicy(Mlp(MlpSpec(2, (), 2), rng), 0.0)


class TestSgdMomentum:
    def test_zero_momentum_is_vanilla(self, rng):
        net = Mlp(MlpSpec(2, (), 1), rng)
        w0 = net.weights[0].copy()
        g = np.ones_like(w0)
        sgd_momentum_step(net, [g], [np.zeros(1)], stepsize=0.1, momentum=0.0)
        np.testing.assert_allclose(net.weights[0], w0 - 0.1 * g, atol=1e-15)

    def test_two_steps_momentum_accumulation(self, rng):
        net = Mlp(MlpSpec(2, (), 1), rng)
        w0 = net.weights[0].copy()
        g = np.full_like(w0, 2.0)
        eta = 0.01
        sgd_momentum_step(net, [g], [np.zeros(1)], eta, 0.9)
        sgd_momentum_step(net, [g], [np.zeros(1)], eta, 0.9)
        np.testing.assert_allclose(net.weights[0], w0 - eta * g * (1.0 + 1.9),
                                   atol=1e-14)

    def test_non_finite_gradient_rejected(self, rng):
        net = Mlp(MlpSpec(2, (), 1), rng)
        w0 = net.weights[0].copy()
        m0 = net.m_w[0].copy()
        ok = sgd_momentum_step(net, [np.array([[np.nan, 1.0]])], [np.zeros(1)],
                               0.1, 0.9)
        assert not ok
        np.testing.assert_array_equal(net.weights[0], w0)
        np.testing.assert_array_equal(net.m_w[0], m0)

    def test_quadratic_bowl_converges(self, rng):
        net = Mlp(MlpSpec(1, (), 1), rng)
        target = 3.0
        for _ in range(1000):
            w = net.weights[0][0, 0]
            sgd_momentum_step(net, [np.array([[2 * (w - target)]])],
                              [np.zeros(1)], 0.05, 0.9)
        assert net.weights[0][0, 0] == pytest.approx(target, abs=1e-6)


class TestCheckpointArrays:
    def test_round_trip_exact(self, rng):
        net = Mlp(MlpSpec(4, (6, 5), 2), rng)
        net.m_w[0][:] = rng.normal(size=net.m_w[0].shape)
        data = net_to_arrays(net, "n")
        back = net_from_arrays(data, "n")
        assert back.spec == net.spec
        for a, b in zip(back.weights, net.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(back.m_w, net.m_w):
            np.testing.assert_array_equal(a, b)

    def test_spec_mismatch_rejected(self, rng):
        net = Mlp(MlpSpec(4, (6,), 2), rng)
        data = net_to_arrays(net, "n")
        data["n/spec"] = np.array([4, 7, 2])  # wrong hidden width
        with pytest.raises(ValueError):
            net_from_arrays(data, "n")

import numpy as np
import pytest

from voxsynth.errors import ModelFormatError, NumericalDivergence, ShapeError
from voxsynth.nn import (
    AdamState,
    Layer,
    Mlp,
    adam_step,
    backward,
    backward_step,
    clip_gradients,
    forward,
    grad_check,
    gradient_penalty,
    gradient_penalty_grads,
    gumbel_softmax,
    load_weights,
    save_weights,
)
from voxsynth.rng import spawn


def linear_net(W, b=None):
    W = np.asarray(W, dtype=float)
    b = np.zeros(W.shape[1]) if b is None else np.asarray(b, dtype=float)
    return Mlp([Layer(W=W, b=b, activation="linear")])


class TestForward:
    def test_identity_layer_passes_input_through(self):
        net = linear_net(np.eye(3))
        x = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, -1.0]])
        assert np.array_equal(forward(net, x).output, x)

    def test_zero_weight_relu_is_zero(self):
        net = Mlp([Layer(W=np.zeros((3, 4)), b=np.zeros(4), activation="relu")])
        out = forward(net, np.array([[1.0, 2.0, 3.0]])).output
        assert np.array_equal(out, np.zeros((1, 4)))

    def test_two_layer_hand_computed(self):
        # z1 = (-1.5, 3) -> relu (0, 3) -> z2 = 3*(-3) + 0.25 = -8.75
        net = Mlp([
            Layer(W=np.array([[1.0, 2.0], [0.0, 1.0], [-1.0, 0.0]]),
                  b=np.array([0.5, -1.0]), activation="relu"),
            Layer(W=np.array([[2.0], [-3.0]]), b=np.array([0.25]),
                  activation="linear"),
        ])
        out = forward(net, np.array([[1.0, 2.0, 3.0]])).output
        assert out[0, 0] == -8.75

    def test_dimension_mismatch(self):
        net = linear_net(np.eye(3))
        with pytest.raises(ShapeError):
            forward(net, np.zeros((2, 4)))


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        net = linear_net(np.array([[1.5]]))
        state = AdamState.init(net, lr=0.1)
        cache = forward(net, np.array([[2.0]]))
        backward_step(net, cache, np.zeros_like(cache.output), state)
        assert net.layers[0].W[0, 0] == 1.5
        assert state.step == 1

    def test_first_step_moves_by_lr(self):
        # Bias-corrected first step with g = 1 moves by ~lr.
        net = linear_net(np.array([[0.0]]), b=[0.0])
        state = AdamState.init(net, lr=1e-3)
        cache = forward(net, np.array([[1.0]]))
        backward_step(net, cache, np.ones((1, 1)), state)
        assert abs((0.0 - net.layers[0].W[0, 0]) - 1e-3) < 1e-9

    def test_clip_norm_scales_to_bound(self):
        grads = [(np.array([[6.0]]), np.array([8.0]))]  # norm 10
        clipped = clip_gradients(grads, 1.0)
        norm = np.sqrt(clipped[0][0][0, 0] ** 2 + clipped[0][1][0] ** 2)
        assert abs(norm - 1.0) <= 1e-9

    def test_nan_gradient_raises(self):
        net = linear_net(np.array([[1.0]]))
        state = AdamState.init(net)
        with pytest.raises(NumericalDivergence):
            adam_step(net, [(np.array([[np.nan]]), np.zeros(1))], state)


class TestGumbelSoftmax:
    def test_zero_noise_reduces_to_softmax(self):
        logits = np.array([1.0, 2.0, 3.0])
        tau = 0.7
        got = gumbel_softmax(logits, tau, noise=np.zeros((1, 3)))
        e = np.exp(logits / tau - np.max(logits / tau))
        assert np.allclose(got, e / e.sum(), atol=1e-12)

    def test_sums_to_one(self):
        rng = spawn(0, "gs")
        for seed in range(20):
            logits = rng.normal(size=7)
            y = gumbel_softmax(logits, tau=0.5, seed=seed)
            assert abs(y.sum() - 1.0) <= 1e-9

    def test_low_temperature_limit(self):
        y = gumbel_softmax(np.array([10.0, 0.0, 0.0]), tau=0.01, seed=123)
        assert y.max() > 0.999

    def test_hard_returns_exact_unit_vector(self):
        y = gumbel_softmax(np.array([[0.3, 0.1, 0.6]]), tau=1.0, seed=5, hard=True)
        assert sorted(y[0].tolist()) == [0.0, 0.0, 1.0]


class TestGradientPenalty:
    def test_unit_gradient_linear_critic(self):
        w = np.array([0.6, 0.8])  # norm 1
        net = linear_net(w.reshape(2, 1))
        real = spawn(1, "gp").normal(size=(8, 2))
        fake = spawn(2, "gp").normal(size=(8, 2))
        assert gradient_penalty(net, real, fake, seed=3) <= 1e-9

    def test_scaled_coordinate_critic(self):
        net = linear_net(np.array([[2.0], [0.0]]))  # f(x) = 2 x1
        real = spawn(1, "gp").normal(size=(8, 2))
        fake = spawn(2, "gp").normal(size=(8, 2))
        assert abs(gradient_penalty(net, real, fake, seed=3) - 1.0) <= 1e-9

    def test_zero_critic(self):
        net = linear_net(np.zeros((3, 1)))
        real = np.zeros((4, 3))
        fake = np.ones((4, 3))
        assert abs(gradient_penalty(net, real, fake, seed=0) - 1.0) <= 1e-9

    @pytest.mark.parametrize("hidden_act", ["leaky_relu", "tanh"])
    def test_parameter_gradients_match_finite_differences(self, hidden_act):
        # Independent oracle: central differences of the penalty itself.
        net = Mlp.create([3, 5, 1], [hidden_act, "linear"], seed=11)
        real = spawn(4, "gp").normal(size=(6, 3))
        fake = spawn(5, "gp").normal(size=(6, 3))
        value, grads = gradient_penalty_grads(net, real, fake, seed=9)
        assert value == pytest.approx(gradient_penalty(net, real, fake, seed=9), abs=1e-12)

        eps = 1e-6
        worst = 0.0
        for li, layer in enumerate(net.layers):
            for param, g in ((layer.W, grads[li][0]), (layer.b, grads[li][1])):
                flat = param.reshape(-1)
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + eps
                    plus = gradient_penalty(net, real, fake, seed=9)
                    flat[k] = orig - eps
                    minus = gradient_penalty(net, real, fake, seed=9)
                    flat[k] = orig
                    numeric = (plus - minus) / (2 * eps)
                    analytic = g.reshape(-1)[k]
                    worst = max(worst, abs(numeric - analytic)
                                / max(1e-8, abs(numeric) + abs(analytic)))
        assert worst < 1e-5


def quadratic_loss(target):
    def loss_fn(out):
        diff = out - target
        return 0.5 * float(np.sum(diff * diff)), diff
    return loss_fn


class TestGradCheck:
    def test_linear_quadratic_near_exact(self):
        net = Mlp.create([4, 1], ["linear"], seed=0)
        batch = spawn(1, "gc").normal(size=(6, 4))
        target = spawn(2, "gc").normal(size=(6, 1))
        assert grad_check(net, batch, quadratic_loss(target), eps=1e-5) < 1e-7

    def test_smooth_two_layer(self):
        net = Mlp.create([5, 16, 3], ["tanh", "linear"], seed=3)
        batch = spawn(3, "gc").normal(size=(10, 5))
        target = spawn(4, "gc").normal(size=(10, 3))
        assert grad_check(net, batch, quadratic_loss(target), eps=1e-5) < 1e-4

    def test_relu_away_from_kinks(self):
        net = Mlp.create([5, 16, 2], ["relu", "linear"], seed=7)
        batch = spawn(5, "gc").normal(size=(12, 5))
        target = spawn(6, "gc").normal(size=(12, 2))
        assert grad_check(net, batch, quadratic_loss(target), eps=1e-5) < 1e-4

    def test_backward_input_gradient(self):
        # dL/dx against finite differences.
        net = Mlp.create([3, 8, 1], ["tanh", "linear"], seed=5)
        x = spawn(7, "gc").normal(size=(4, 3))
        loss_fn = quadratic_loss(np.zeros((4, 1)))
        cache = forward(net, x)
        _, grad_out = loss_fn(cache.output)
        _, gx = backward(net, cache, grad_out)
        eps = 1e-6
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                orig = x[i, j]
                x[i, j] = orig + eps
                plus, _ = loss_fn(forward(net, x).output)
                x[i, j] = orig - eps
                minus, _ = loss_fn(forward(net, x).output)
                x[i, j] = orig
                numeric = (plus - minus) / (2 * eps)
                assert abs(numeric - gx[i, j]) < 1e-6 * max(1.0, abs(numeric))


class TestSerialization:
    def test_round_trip(self):
        net = Mlp.create([4, 6, 5], ["leaky_relu", "blocks"], seed=2,
                         blocks=(("tanh", 1), ("softmax", 4)), tau=0.2)
        blob = save_weights(net)
        clone = load_weights(blob)
        for a, b in zip(net.layers, clone.layers):
            assert np.array_equal(a.W, b.W)
            assert np.array_equal(a.b, b.b)
            assert a.activation == b.activation
            assert a.blocks == b.blocks
            assert a.tau == b.tau
        x = spawn(8, "ser").normal(size=(3, 4))
        noise = np.zeros((3, 5))
        assert np.array_equal(forward(net, x, head_noise=noise).output,
                              forward(clone, x, head_noise=noise).output)

    def test_truncated_blob(self):
        net = Mlp.create([3, 2], ["linear"], seed=0)
        blob = save_weights(net)
        with pytest.raises(ModelFormatError):
            load_weights(blob[: len(blob) // 2])

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError):
            load_weights(b"NOTNN" + b"\x00" * 32)


class TestBlocksActivation:
    def test_softmax_blocks_normalize(self):
        net = Mlp.create([3, 6], ["blocks"], seed=4,
                         blocks=(("tanh", 2), ("softmax", 4)), tau=0.5)
        out = forward(net, spawn(9, "blk").normal(size=(5, 3))).output
        assert np.all(np.abs(out[:, :2]) <= 1.0)
        assert np.allclose(out[:, 2:].sum(axis=1), 1.0, atol=1e-9)

    def test_blocks_backward_matches_finite_differences(self):
        net = Mlp.create([3, 7, 5], ["tanh", "blocks"], seed=6,
                         blocks=(("tanh", 1), ("softmax", 4)), tau=0.3)
        batch = spawn(10, "blk").normal(size=(6, 3))
        target = spawn(11, "blk").normal(size=(6, 5))
        assert grad_check(net, batch, quadratic_loss(target), eps=1e-6) < 1e-4

import numpy as np
import pytest

from flowsteer import (
    GmmTarget,
    ParameterError,
    ShapeError,
    TimeGrid,
    TrainConfig,
    TrainingError,
    euler_generate,
    gmm_velocity_field,
    grad_check,
    net_forward,
    net_init,
    train,
    velocity_field,
)
from flowsteer.velocity_net import _forward_batch, _loss_and_grads


def point_mass(rng, n):
    return np.tile([0.3, -0.7], (n, 1))


class TestNetInit:
    def test_same_seed_identical(self):
        a = net_init(2, [64, 64], 8, seed=7)
        b = net_init(2, [64, 64], 8, seed=7)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seed_differs(self):
        a = net_init(2, [64, 64], 8, seed=7)
        b = net_init(2, [64, 64], 8, seed=8)
        assert any(not np.array_equal(wa, wb) for wa, wb in zip(a.weights, b.weights))

    def test_fresh_net_finite_output(self):
        net = net_init(5, [32], 8, seed=0)
        out = net_forward(net, np.random.default_rng(0).standard_normal(5), 0.5)
        assert np.all(np.isfinite(out))

    def test_layer_shapes_chain(self):
        net = net_init(3, [16, 8], 4, seed=0)
        assert net.layer_sizes == [3 + 4, 16, 8, 3]

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(data_dim=0, hidden=[4], time_features=2, seed=0),
            dict(data_dim=2, hidden=[], time_features=2, seed=0),
            dict(data_dim=2, hidden=[4], time_features=3, seed=0),
            dict(data_dim=2, hidden=[0], time_features=2, seed=0),
        ],
    )
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ParameterError):
            net_init(**kwargs)


class TestNetForward:
    def test_pure(self):
        net = net_init(4, [16], 4, seed=2)
        x = np.random.default_rng(1).standard_normal(4)
        np.testing.assert_array_equal(net_forward(net, x, 0.3), net_forward(net, x, 0.3))

    def test_output_matches_input_dims(self):
        net = net_init(6, [16], 4, seed=2)
        x = np.random.default_rng(2).standard_normal(6)
        assert net_forward(net, x, 0.9).shape == x.shape

    def test_shape_check(self):
        net = net_init(6, [16], 4, seed=2)
        with pytest.raises(ShapeError):
            net_forward(net, np.zeros(5), 0.5)

    def test_velocity_field_preserves_shape(self):
        net = net_init(12, [8], 4, seed=3)
        field = velocity_field(net)
        x = np.random.default_rng(0).standard_normal((3, 2, 2))
        assert field(x, 0.4).shape == (3, 2, 2)


class TestGradients:
    def test_grad_check_small_net(self):
        net = net_init(2, [32, 32], 8, seed=3)
        x = np.random.default_rng(0).standard_normal(2)
        assert grad_check(net, x, 0.37) <= 1e-4

    def test_grad_check_wide_net(self):
        net = net_init(48, [64], 4, seed=5)
        x = np.random.default_rng(1).standard_normal(48)
        assert grad_check(net, x, 0.8) <= 1e-4

    def test_grad_check_deterministic(self):
        net = net_init(4, [16], 4, seed=9)
        x = np.random.default_rng(3).standard_normal(4)
        assert grad_check(net, x, 0.2, seed=5) == grad_check(net, x, 0.2, seed=5)

    def test_output_bias_gradient_chain_rule(self):
        # zero input, zero target: the output-layer bias gradient must equal
        # the chain-rule pattern 2 * out / B exactly
        net = net_init(3, [8], 4, seed=1)
        x = np.zeros((1, 3))
        t = np.array([0.6])
        out, _ = _forward_batch(net, x, t)
        _, _, gb = _loss_and_grads(net, x, t, np.zeros((1, 3)))
        np.testing.assert_allclose(gb[-1], 2.0 * out[0], atol=1e-15)


class TestTraining:
    def test_point_mass_smoke(self):
        net = net_init(2, [64, 64], 8, seed=11)
        losses = train(net, point_mass, TrainConfig(steps=2000, seed=4))
        assert losses[-1] < 0.25 * losses[0]

    def test_zero_learning_rate_constant_curve(self):
        net = net_init(2, [16], 8, seed=1)
        losses = train(net, point_mass, TrainConfig(steps=50, learning_rate=0.0, seed=9))
        np.testing.assert_array_equal(losses, np.full_like(losses, losses[0]))

    def test_identical_seeds_identical_curves(self):
        run = []
        for _ in range(2):
            net = net_init(2, [16], 8, seed=1)
            run.append(train(net, point_mass, TrainConfig(steps=100, seed=9)))
        np.testing.assert_array_equal(run[0], run[1])

    def test_divergence_names_step(self):
        net = net_init(2, [16], 8, seed=1)
        with pytest.raises(TrainingError) as err:
            train(net, point_mass, TrainConfig(steps=200, learning_rate=1e6, seed=0))
        assert err.value.step is not None

    def test_plain_sgd_option(self):
        net = net_init(2, [32], 8, seed=2)
        losses = train(net, point_mass, TrainConfig(steps=500, momentum=None, seed=3))
        assert losses[-1] < losses[0]

    def test_bad_config(self):
        with pytest.raises(ParameterError):
            TrainConfig(steps=0)
        with pytest.raises(ParameterError):
            TrainConfig(steps=1, momentum=1.0)


class TestLearnedTransport:
    @pytest.fixture(scope="class")
    def trained_2d(self):
        target = GmmTarget([0.5, 0.5], [[2.0, 0.0], [-2.0, 0.0]], [0.1, 0.1])
        net = net_init(2, [64, 64], 8, seed=7)
        losses = train(
            net,
            lambda rng, n: target.sample(rng, n),
            TrainConfig(steps=20_000, batch_size=64, learning_rate=1e-3, momentum=0.9, seed=0),
        )
        return target, net, losses

    def test_terminal_samples_hit_modes(self, trained_2d):
        target, net, _ = trained_2d
        field = velocity_field(net)
        grid = TimeGrid.uniform(30)
        rng = np.random.default_rng(1)
        finals = np.array(
            [euler_generate(field, rng.standard_normal(2), grid)[-1] for _ in range(2000)]
        )
        dist = np.minimum(
            np.linalg.norm(finals - target.means[0], axis=1),
            np.linalg.norm(finals - target.means[1], axis=1),
        )
        assert np.mean(dist < 0.5) >= 0.95

    def test_learned_field_worse_than_oracle(self, trained_2d):
        target, net, _ = trained_2d
        grid = TimeGrid.uniform(30)

        def mode_error(field):
            rng = np.random.default_rng(1)
            finals = np.array(
                [euler_generate(field, rng.standard_normal(2), grid)[-1] for _ in range(500)]
            )
            return np.mean(
                np.minimum(
                    np.linalg.norm(finals - target.means[0], axis=1),
                    np.linalg.norm(finals - target.means[1], axis=1),
                )
            )

        assert mode_error(velocity_field(net)) > mode_error(gmm_velocity_field(target))

    def test_loss_curve_smoothed_non_increasing(self, trained_2d):
        _, _, losses = trained_2d
        windows = losses.reshape(-1, 100).mean(axis=1)
        # non-increasing up to small plateau noise from momentum oscillation
        assert np.all(np.diff(windows) <= 0.02 * windows[:-1] + 1e-12)

import numpy as np
import pytest

from flowsteer import (
    Blur,
    Colorization,
    Denoise,
    FidelityUpdateConfig,
    ParameterError,
    ShapeError,
    SuperRes4,
    default_kernel_size,
    fidelity_update,
    make_gaussian_kernel,
    make_operator,
)

DIMS = (3, 16, 16)


def rand_image(seed, dims=DIMS):
    return np.random.default_rng(seed).random(dims)


class TestGaussianKernel:
    def test_paper_scale_kernel(self):
        k = make_gaussian_kernel(61, 3.0)
        assert k.shape == (61, 61)
        assert abs(k.sum() - 1.0) < 1e-9

    def test_degenerate_size_one(self):
        assert np.array_equal(make_gaussian_kernel(1, 0.7), [[1.0]])

    def test_center_peak_and_symmetry(self):
        # oracle: evaluate exp(-r^2 / 2 sigma^2) on the grid and normalize
        size, sigma = 5, 1.0
        r = np.arange(-2, 3, dtype=float)
        expected = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
        expected /= expected.sum()
        k = make_gaussian_kernel(size, sigma)
        np.testing.assert_allclose(k, expected, atol=1e-15)
        assert k[2, 2] == k.max()
        np.testing.assert_array_equal(k, np.rot90(k))

    @pytest.mark.parametrize("size,sigma", [(4, 1.0), (0, 1.0), (-3, 1.0), (5, 0.0), (5, -1.0)])
    def test_rejects_bad_parameters(self, size, sigma):
        with pytest.raises(ParameterError):
            make_gaussian_kernel(size, sigma)

    def test_default_size_formula(self):
        assert default_kernel_size(3.0) == 19
        assert default_kernel_size(30.0) == 61
        # shrinks to the largest odd size that fits the image
        assert default_kernel_size(3.0, (16, 16)) == 15
        assert default_kernel_size(3.0, (19, 32)) == 19


class TestColorization:
    def test_single_pixel_channel_mean(self):
        op = Colorization((3, 1, 1))
        y = op.apply(np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1))
        np.testing.assert_allclose(y.ravel(), [1 / 3, 1 / 3, 1 / 3])

    def test_achromatic_measurement_fixed_point(self):
        op = Colorization(DIMS)
        gray = rand_image(0)[0]
        y = np.stack([gray] * 3)
        # exact up to one rounding of (g+g+g)/3
        np.testing.assert_allclose(op.apply_pinv(y), y, rtol=1e-15, atol=0)

    def test_projection_property(self):
        op = Colorization(DIMS)
        for seed in range(5):
            x = rand_image(seed)
            once = op.apply(x)
            np.testing.assert_allclose(op.apply(once), once, atol=1e-9)

    def test_rejects_grayscale_dims(self):
        with pytest.raises(ParameterError):
            Colorization((1, 8, 8))


class TestBlur:
    def test_delta_reproduces_kernel(self):
        op = Blur(DIMS, sigma_b=1.0, kernel_size=5)
        x = np.zeros(DIMS)
        x[:, 8, 8] = 1.0
        y = op.apply(x)
        np.testing.assert_allclose(y[0, 6:11, 6:11], op.kernel, atol=1e-12)
        assert abs(y.sum() - 3.0) < 1e-9

    def test_wiener_dc_gain(self):
        op = Blur(DIMS, sigma_b=1.5, wiener_lambda=0.1)
        out = op.apply_pinv(np.ones(DIMS))
        np.testing.assert_allclose(out, 1.0 / 1.1, atol=1e-9)

    def test_wiener_normal_equations(self):
        # frequency-domain oracle: (|H|^2 + lam) X_hat == conj(H) Y
        op = Blur(DIMS, sigma_b=2.0, wiener_lambda=0.1)
        y = rand_image(3)
        x_hat = op.apply_pinv(y)
        h = op._kernel_fft
        lhs = (np.abs(h) ** 2 + 0.1) * np.fft.fft2(x_hat, axes=(1, 2))
        rhs = np.conj(h) * np.fft.fft2(y, axes=(1, 2))
        assert np.max(np.abs(lhs - rhs)) < 1e-5

    def test_kernel_must_fit_image(self):
        with pytest.raises(ParameterError):
            Blur((3, 8, 8), sigma_b=1.0, kernel_size=9)

    def test_spatial_convolution_oracle(self):
        # brute-force circular convolution on a small image
        op = Blur((1, 8, 8), sigma_b=1.0, kernel_size=3)
        x = rand_image(7, (1, 8, 8))
        k = op.kernel
        expected = np.zeros((8, 8))
        for di in range(-1, 2):
            for dj in range(-1, 2):
                expected += k[di + 1, dj + 1] * np.roll(x[0], (di, dj), axis=(0, 1))
        np.testing.assert_allclose(op.apply(x)[0], expected, atol=1e-12)


class TestSuperRes4:
    def test_block_mean(self):
        op = SuperRes4((3, 4, 4))
        x = np.zeros((3, 4, 4))
        x[0] = np.arange(16, dtype=float).reshape(4, 4)
        assert op.apply(x)[0, 0, 0] == pytest.approx(7.5)

    def test_pinv_is_exact_right_inverse(self):
        op = SuperRes4(DIMS)
        y = np.random.default_rng(5).random((3, 4, 4))
        np.testing.assert_array_equal(op.apply(op.apply_pinv(y)), y)

    def test_rejects_indivisible_dims(self):
        with pytest.raises(ParameterError):
            SuperRes4((3, 15, 16))


class TestDenoise:
    def test_identity_both_ways(self):
        op = Denoise(DIMS, noise_sigma=0.2)
        x = rand_image(2)
        np.testing.assert_array_equal(op.apply(x), x)
        np.testing.assert_array_equal(op.apply_pinv(x), x)


@pytest.fixture(params=["colorization", "superres4", "denoise"])
def exact_pinv_op(request):
    return make_operator(request.param, DIMS)


class TestOperatorAlgebra:
    def test_pseudo_inverse_identity(self, exact_pinv_op):
        op = exact_pinv_op
        for seed in range(10):
            x = rand_image(seed)
            ax = op.apply(x)
            np.testing.assert_allclose(op.apply(op.apply_pinv(ax)), ax, atol=1e-6)

    def test_linearity(self):
        ops = [
            make_operator("colorization", DIMS),
            Blur(DIMS, sigma_b=1.5),
            make_operator("superres4", DIMS),
            make_operator("denoise", DIMS),
        ]
        x, z = rand_image(11), rand_image(12)
        for op in ops:
            for f in (op.apply, op.apply_pinv) if op.output_dims == op.input_dims else (op.apply,):
                lhs = f(2.5 * x - 0.7 * z)
                rhs = 2.5 * f(x) - 0.7 * f(z)
                np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    def test_shape_errors(self):
        op = SuperRes4(DIMS)
        with pytest.raises(ShapeError):
            op.apply(np.zeros((3, 8, 8)))
        with pytest.raises(ShapeError):
            op.apply_pinv(np.zeros((3, 16, 16)))


class TestFidelityUpdate:
    def test_lambda_zero_returns_pinv(self):
        op = make_operator("colorization", DIMS)
        x, y = rand_image(0), make_operator("colorization", DIMS).apply(rand_image(1))
        out = fidelity_update(x, y, op, FidelityUpdateConfig(0.0, 0.0))
        np.testing.assert_array_equal(out, op.apply_pinv(y))

    def test_denoise_lambda_one_returns_measurement(self):
        op = make_operator("denoise", DIMS)
        x, y = rand_image(3), rand_image(4)
        out = fidelity_update(x, y, op, FidelityUpdateConfig(1.0, 0.0))
        np.testing.assert_array_equal(out, y)

    def test_colorization_range_null_split(self):
        # brute-force range/null split on a 2x2 image: the channel mean of the
        # result must equal y while per-pixel chroma offsets of x survive
        dims = (3, 2, 2)
        op = Colorization(dims)
        x_true = np.random.default_rng(8).random(dims)
        x = np.random.default_rng(9).random(dims)
        y = op.apply(x_true)
        out = fidelity_update(x, y, op, FidelityUpdateConfig(1.0, 0.0))
        np.testing.assert_allclose(out.mean(axis=0, keepdims=True), y[:1], atol=1e-6)
        np.testing.assert_allclose(out - out.mean(axis=0), x - x.mean(axis=0), atol=1e-12)

    def test_consistency_for_exact_pinv(self, exact_pinv_op):
        op = exact_pinv_op
        x, x_true = rand_image(20), rand_image(21)
        y = op.apply(x_true)
        out = fidelity_update(x, y, op, FidelityUpdateConfig(1.0, 0.0))
        assert np.max(np.abs(op.apply(out) - y)) < 1e-5

    def test_idempotence(self, exact_pinv_op):
        op = exact_pinv_op
        x, y = rand_image(30), exact_pinv_op.apply(rand_image(31))
        cfg = FidelityUpdateConfig(1.0, 0.0)
        once = fidelity_update(x, y, op, cfg)
        twice = fidelity_update(once, y, op, cfg)
        np.testing.assert_allclose(twice, once, atol=1e-6)

    def test_noise_injection_statistics(self):
        op = make_operator("denoise", DIMS)
        y = rand_image(1)
        cfg = FidelityUpdateConfig(1.0, 0.05)
        out = fidelity_update(rand_image(0), y, op, cfg, rng=np.random.default_rng(0))
        noise = out - y
        assert 0.04 < noise.std() < 0.06

    def test_noise_requires_rng(self):
        op = make_operator("denoise", DIMS)
        with pytest.raises(ParameterError):
            fidelity_update(rand_image(0), rand_image(1), op, FidelityUpdateConfig(1.0, 0.1))

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            FidelityUpdateConfig(1.5, 0.0)
        with pytest.raises(ParameterError):
            FidelityUpdateConfig(0.5, -0.1)

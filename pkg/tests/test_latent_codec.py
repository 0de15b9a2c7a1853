import numpy as np
import pytest

from flowsteer import ParameterError, ShapeError, haar_codec, identity_codec


def rand_image(seed, dims=(3, 8, 8)):
    return np.random.default_rng(seed).standard_normal(dims)


class TestIdentityCodec:
    def test_passthrough(self):
        codec = identity_codec((3, 8, 8))
        x = rand_image(0)
        np.testing.assert_array_equal(codec.encode(x), x)
        np.testing.assert_array_equal(codec.decode(x), x)
        assert codec.latent_dims == (3, 8, 8)


class TestHaarCodec:
    def test_latent_dims(self):
        codec = haar_codec((3, 8, 8))
        assert codec.latent_dims == (12, 4, 4)

    def test_constant_patch_coefficients(self):
        # hand application of the orthonormal 4x4 Haar matrix: a constant
        # patch c maps to average 2c and zero details
        codec = haar_codec((1, 2, 2))
        z = codec.encode(np.full((1, 2, 2), 0.7))
        np.testing.assert_allclose(z.ravel(), [1.4, 0.0, 0.0, 0.0], atol=1e-15)

    def test_round_trip(self):
        codec = haar_codec((3, 8, 8))
        x = rand_image(1)
        np.testing.assert_allclose(codec.decode(codec.encode(x)), x, atol=1e-10)

    def test_norm_preserving(self):
        codec = haar_codec((3, 8, 8))
        for seed in range(5):
            x = rand_image(seed)
            z = codec.encode(x)
            assert np.linalg.norm(z) == pytest.approx(np.linalg.norm(x), abs=1e-10)

    def test_linear(self):
        codec = haar_codec((3, 8, 8))
        x, y = rand_image(2), rand_image(3)
        np.testing.assert_allclose(
            codec.encode(2.0 * x - 0.5 * y),
            2.0 * codec.encode(x) - 0.5 * codec.encode(y),
            atol=1e-12,
        )

    def test_zero_latent_decodes_to_zero(self):
        codec = haar_codec((3, 8, 8))
        np.testing.assert_array_equal(codec.decode(np.zeros((12, 4, 4))), np.zeros((3, 8, 8)))

    def test_decode_encode_decode_identity(self):
        codec = haar_codec((3, 8, 8))
        z = np.random.default_rng(4).standard_normal((12, 4, 4))
        once = codec.decode(z)
        np.testing.assert_allclose(codec.decode(codec.encode(once)), once, atol=1e-10)

    def test_rejects_odd_spatial_dims(self):
        with pytest.raises(ShapeError):
            haar_codec((3, 7, 8))

    def test_shape_errors(self):
        codec = haar_codec((3, 8, 8))
        with pytest.raises(ShapeError):
            codec.encode(np.zeros((3, 4, 4)))
        with pytest.raises(ShapeError):
            codec.decode(np.zeros((3, 8, 8)))


class TestLossyAblation:
    def test_noise_added_inside_decode(self):
        codec = identity_codec((3, 8, 8), decode_noise_sigma=0.1)
        x = rand_image(5)
        out = codec.decode(x, rng=np.random.default_rng(0))
        assert not np.array_equal(out, x)
        assert np.std(out - x) == pytest.approx(0.1, rel=0.3)
        # the diagnostic decode stays exact
        np.testing.assert_array_equal(codec.decode_exact(x), x)

    def test_lossy_decode_requires_rng(self):
        codec = identity_codec((3, 8, 8), decode_noise_sigma=0.1)
        with pytest.raises(ParameterError):
            codec.decode(rand_image(6))

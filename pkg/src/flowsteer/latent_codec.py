"""Exactly invertible codecs bridging the sampler's latent space and pixel
space.

Both codecs are linear and invert to machine precision, so codec error is
eliminated as a confound; a lossy codec is simulated by setting
``decode_noise_sigma`` > 0, which adds Gaussian noise inside decode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = ["LatentCodec", "identity_codec", "haar_codec"]


@dataclass(frozen=True)
class LatentCodec:
    """kind 'identity' keeps latent == pixel; kind 'haar2x2' maps each
    non-overlapping 2x2 patch per channel to its four orthonormal Haar
    coefficients (average, horizontal, vertical, diagonal), halving each
    spatial extent and quadrupling channels."""

    kind: str
    pixel_dims: tuple[int, ...]
    decode_noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pixel_dims", tuple(self.pixel_dims))
        if self.kind not in ("identity", "haar2x2"):
            raise ParameterError(f"unknown codec kind {self.kind!r}")
        if self.decode_noise_sigma < 0.0:
            raise ParameterError("decode_noise_sigma must be >= 0")
        if self.kind == "haar2x2":
            if len(self.pixel_dims) != 3:
                raise ShapeError("haar2x2 codec needs (C, H, W) pixel dims")
            _, h, w = self.pixel_dims
            if h % 2 or w % 2:
                raise ShapeError(f"haar2x2 codec needs even spatial dims, got {h}x{w}")

    @property
    def latent_dims(self) -> tuple[int, ...]:
        if self.kind == "identity":
            return self.pixel_dims
        c, h, w = self.pixel_dims
        return (4 * c, h // 2, w // 2)

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.pixel_dims:
            raise ShapeError(f"encode input {x.shape} != pixel dims {self.pixel_dims}")
        if self.kind == "identity":
            return x.copy()
        a = x[:, 0::2, 0::2]
        b = x[:, 0::2, 1::2]
        c = x[:, 1::2, 0::2]
        d = x[:, 1::2, 1::2]
        return np.concatenate(
            [(a + b + c + d) / 2, (a - b + c - d) / 2, (a + b - c - d) / 2, (a - b - c + d) / 2],
            axis=0,
        )

    def decode(self, z: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        out = self.decode_exact(z)
        if self.decode_noise_sigma > 0.0:
            if rng is None:
                raise ParameterError("lossy decode requires an explicit rng")
            out = out + self.decode_noise_sigma * rng.standard_normal(out.shape)
        return out

    def decode_exact(self, z: np.ndarray) -> np.ndarray:
        """The noiseless linear inverse of encode (used for diagnostics even
        when the lossy ablation is active)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != self.latent_dims:
            raise ShapeError(f"decode input {z.shape} != latent dims {self.latent_dims}")
        if self.kind == "identity":
            return z.copy()
        n = self.pixel_dims[0]
        avg, hor, ver, diag = z[:n], z[n : 2 * n], z[2 * n : 3 * n], z[3 * n :]
        out = np.empty(self.pixel_dims)
        out[:, 0::2, 0::2] = (avg + hor + ver + diag) / 2
        out[:, 0::2, 1::2] = (avg - hor + ver - diag) / 2
        out[:, 1::2, 0::2] = (avg + hor - ver - diag) / 2
        out[:, 1::2, 1::2] = (avg - hor - ver + diag) / 2
        return out


def identity_codec(pixel_dims: tuple[int, ...], decode_noise_sigma: float = 0.0) -> LatentCodec:
    return LatentCodec("identity", pixel_dims, decode_noise_sigma)


def haar_codec(pixel_dims: tuple[int, ...], decode_noise_sigma: float = 0.0) -> LatentCodec:
    return LatentCodec("haar2x2", pixel_dims, decode_noise_sigma)

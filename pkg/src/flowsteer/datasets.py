"""Deterministic procedural shape images used as the desk-scale dataset.

Each image is an anti-aliased composition of 1-3 filled ellipses/rectangles
over a smooth two-color gradient.  Identical seeds give bit-identical
datasets; per-image randomness comes from a splitmix-style stream derived
from the dataset seed, so generation order does not matter.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

__all__ = ["gen_shape_dataset", "derive_seed", "splitmix64"]

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given 64-bit state."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, index: int, stream: int = 0) -> int:
    """Expand an experiment seed into independent per-item stream seeds.

    ``stream`` separates uses of the same item index (dataset generation,
    measurement noise, sampling, training) so parallel and serial execution
    agree.
    """
    z = splitmix64(master & _MASK)
    z = splitmix64(z ^ splitmix64((stream & _MASK) + 0xD1B54A32D192ED03))
    return splitmix64(z ^ ((index & _MASK) + 0x8CB92BA72F3D8DD7))


def _gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    c0 = rng.uniform(0.15, 0.85, size=3)
    c1 = rng.uniform(0.15, 0.85, size=3)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    proj = xx * np.cos(theta) + yy * np.sin(theta)
    proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-12)
    return c0[:, None, None] + (c1 - c0)[:, None, None] * proj[None]


def _shape_alpha(size: int, rng: np.random.Generator) -> np.ndarray:
    """Coverage mask in [0, 1] with a ~1-pixel anti-aliased edge."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
    rx, ry = rng.uniform(0.12 * size, 0.35 * size, size=2)
    if rng.uniform() < 0.5:
        d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
        edge = min(rx, ry)
        return np.clip((1.0 - d) * edge + 0.5, 0.0, 1.0)
    inside_x = np.minimum(xx - (cx - rx), (cx + rx) - xx)
    inside_y = np.minimum(yy - (cy - ry), (cy + ry) - yy)
    return np.clip(inside_x + 0.5, 0.0, 1.0) * np.clip(inside_y + 0.5, 0.0, 1.0)


def gen_shape_dataset(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Generate ``count`` RGB images of shape (3, size, size) in [0, 1]."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if not 8 <= size <= 64:
        raise ParameterError(f"size must lie in [8, 64], got {size}")
    images = []
    for i in range(count):
        rng = np.random.default_rng(derive_seed(seed, i))
        img = _gradient(size, rng)
        for _ in range(int(rng.integers(1, 4))):
            alpha = _shape_alpha(size, rng)[None]
            color = rng.uniform(0.05, 0.95, size=3)[:, None, None]
            img = alpha * color + (1.0 - alpha) * img
        images.append(np.clip(img, 0.0, 1.0))
    return images

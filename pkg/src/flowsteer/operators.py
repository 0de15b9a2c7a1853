"""Linear degradation operators, their pseudo-inverses, and the null-space
fidelity update.

All operators are pure value transformations on numpy arrays.  Images are
float64 arrays shaped ``(channels, height, width)``; values are *not* clamped
to [0, 1] here (clamping happens only at image export).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "DegradationOperator",
    "Colorization",
    "Blur",
    "SuperRes4",
    "Denoise",
    "FidelityUpdateConfig",
    "make_gaussian_kernel",
    "default_kernel_size",
    "fidelity_update",
    "make_operator",
]


def _require_dims(x: np.ndarray, dims: tuple[int, ...], what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(dims):
        raise ShapeError(f"{what} has shape {x.shape}, expected {tuple(dims)}")
    return x


def make_gaussian_kernel(size: int, sigma_b: float) -> np.ndarray:
    """Normalized 2-D truncated Gaussian kernel with its peak at the center.

    ``size`` must be odd so the kernel has a well-defined center pixel.
    """
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and positive, got {size}")
    if sigma_b <= 0:
        raise ParameterError(f"sigma_b must be > 0, got {sigma_b}")
    half = size // 2
    r = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma_b**2))
    return g / g.sum()


def default_kernel_size(sigma_b: float, image_hw: tuple[int, int] | None = None) -> int:
    """Default blur-kernel size: min(61, 2*ceil(3*sigma_b)+1), shrunk if
    necessary to the largest odd size that fits the image."""
    size = min(61, 2 * math.ceil(3.0 * sigma_b) + 1)
    if image_hw is not None:
        limit = min(image_hw)
        if limit < 1:
            raise ParameterError("image dimensions must be positive")
        if size > limit:
            size = limit if limit % 2 == 1 else limit - 1
    return size


class DegradationOperator:
    """A named linear map A with an associated pseudo-inverse A†."""

    kind: str = "abstract"

    def __init__(self, input_dims: tuple[int, ...], output_dims: tuple[int, ...]):
        self.input_dims = tuple(input_dims)
        self.output_dims = tuple(output_dims)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = _require_dims(x, self.input_dims, "operator input")
        return self._apply(x)

    def apply_pinv(self, y: np.ndarray) -> np.ndarray:
        y = _require_dims(y, self.output_dims, "operator measurement")
        return self._apply_pinv(y)

    def range_projection(self, x: np.ndarray) -> np.ndarray:
        """A†A x — the measurement-determined component of x."""
        return self.apply_pinv(self.apply(x))

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _apply_pinv(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class Colorization(DegradationOperator):
    """Per-pixel channel mean, replicated back to three channels (A = A†)."""

    kind = "colorization"

    def __init__(self, dims: tuple[int, int, int]):
        if len(dims) != 3 or dims[0] != 3:
            raise ParameterError(f"colorization needs (3, H, W) dims, got {dims}")
        super().__init__(dims, dims)

    def _apply(self, x):
        return np.broadcast_to(x.mean(axis=0, keepdims=True), x.shape).copy()

    _apply_pinv = _apply


class Blur(DegradationOperator):
    """Circular (periodic) Gaussian blur with a Tikhonov-regularized
    (Wiener-type) pseudo-inverse, both evaluated in the frequency domain.

    The kernel is real and symmetric, so its DFT is real; the Wiener gain is
    conj(H) / (|H|^2 + wiener_lambda).
    """

    kind = "blur"

    def __init__(
        self,
        dims: tuple[int, int, int],
        sigma_b: float,
        wiener_lambda: float = 0.1,
        kernel_size: int | None = None,
    ):
        if len(dims) != 3:
            raise ParameterError(f"blur needs (C, H, W) dims, got {dims}")
        if wiener_lambda <= 0:
            raise ParameterError(f"wiener_lambda must be > 0, got {wiener_lambda}")
        super().__init__(dims, dims)
        h, w = dims[1], dims[2]
        if kernel_size is None:
            kernel_size = default_kernel_size(sigma_b, (h, w))
        if kernel_size > min(h, w):
            raise ParameterError(
                f"kernel size {kernel_size} exceeds image extent {min(h, w)}"
            )
        self.sigma_b = float(sigma_b)
        self.wiener_lambda = float(wiener_lambda)
        self.kernel = make_gaussian_kernel(kernel_size, sigma_b)
        # Embed the kernel with its center at the origin so circular
        # convolution introduces no shift.
        padded = np.zeros((h, w))
        k = kernel_size
        padded[:k, :k] = self.kernel
        padded = np.roll(padded, (-(k // 2), -(k // 2)), axis=(0, 1))
        self._kernel_fft = np.fft.fft2(padded)
        self._wiener_gain = np.conj(self._kernel_fft) / (
            np.abs(self._kernel_fft) ** 2 + self.wiener_lambda
        )

    def _apply(self, x):
        return np.real(np.fft.ifft2(np.fft.fft2(x, axes=(1, 2)) * self._kernel_fft, axes=(1, 2)))

    def _apply_pinv(self, y):
        return np.real(np.fft.ifft2(np.fft.fft2(y, axes=(1, 2)) * self._wiener_gain, axes=(1, 2)))

    def params(self):
        return {
            "sigma_b": self.sigma_b,
            "wiener_lambda": self.wiener_lambda,
            "kernel_size": self.kernel.shape[0],
        }


class SuperRes4(DegradationOperator):
    """4x average pooling over non-overlapping blocks; the pseudo-inverse is
    patch replication (nearest-neighbor up-sampling), so A A† = I exactly."""

    kind = "superres4"
    factor = 4

    def __init__(self, dims: tuple[int, int, int]):
        if len(dims) != 3 or dims[1] % 4 != 0 or dims[2] % 4 != 0:
            raise ParameterError(
                f"superres4 needs (C, H, W) with H, W divisible by 4, got {dims}"
            )
        c, h, w = dims
        super().__init__(dims, (c, h // 4, w // 4))

    def _apply(self, x):
        c, h, w = self.input_dims
        return x.reshape(c, h // 4, 4, w // 4, 4).mean(axis=(2, 4))

    def _apply_pinv(self, y):
        return np.repeat(np.repeat(y, 4, axis=1), 4, axis=2)


class Denoise(DegradationOperator):
    """Identity forward operator; the Gaussian measurement noise of strength
    ``noise_sigma`` is added by the harness when synthesizing measurements."""

    kind = "denoise"

    def __init__(self, dims: tuple[int, ...], noise_sigma: float = 0.2):
        if noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
        super().__init__(dims, dims)
        self.noise_sigma = float(noise_sigma)

    def _apply(self, x):
        return x.copy()

    _apply_pinv = _apply

    def params(self):
        return {"noise_sigma": self.noise_sigma}


_OPERATOR_KINDS = {
    "colorization": Colorization,
    "blur": Blur,
    "superres4": SuperRes4,
    "denoise": Denoise,
}


def make_operator(kind: str, dims: tuple[int, ...], **params) -> DegradationOperator:
    """Construct an operator by kind name (used by the config layer)."""
    try:
        cls = _OPERATOR_KINDS[kind]
    except KeyError:
        raise ParameterError(f"unknown operator kind {kind!r}") from None
    return cls(dims, **params)


@dataclass(frozen=True)
class FidelityUpdateConfig:
    """Strength of the null-space update and the optional injected noise used
    by the noise-sensitivity ablation."""

    lambda_strength: float = 1.0
    injected_noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_strength <= 1.0:
            raise ParameterError(
                f"lambda_strength must lie in [0, 1], got {self.lambda_strength}"
            )
        if self.injected_noise_sigma < 0.0:
            raise ParameterError(
                f"injected_noise_sigma must be >= 0, got {self.injected_noise_sigma}"
            )


def fidelity_update(
    x: np.ndarray,
    y: np.ndarray,
    op: DegradationOperator,
    cfg: FidelityUpdateConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Return A†y + λ (x − A†A x) + ξ with ξ ~ N(0, η_eff² I).

    With λ = 1, η_eff = 0 and an exact pseudo-inverse the result is
    measurement-consistent: A(result) == y for consistent y.
    """
    x = _require_dims(x, op.input_dims, "fidelity-update estimate")
    y = _require_dims(y, op.output_dims, "fidelity-update measurement")
    out = op.apply_pinv(y) + cfg.lambda_strength * (x - op.range_projection(x))
    if cfg.injected_noise_sigma > 0.0:
        if rng is None:
            raise ParameterError("injected noise requires an explicit rng")
        out = out + cfg.injected_noise_sigma * rng.standard_normal(out.shape)
    return out

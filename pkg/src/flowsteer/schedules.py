"""Constructors for per-step conditioning schedules.

Lambda schedules index reconstruction steps by iterations elapsed since the
start of the path: step 1 is the first (noisiest) sampler iteration, step N
the last.  Fractions like 0.5N therefore read off directly as positions along
the reconstruction.

The diffusion side carries the DDPM beta/alpha-bar/sigma schedule plus the
noise-robust (lambda_t, gamma_t) damping, including its flow-collapse
behavior at sigma_t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "LambdaSchedule",
    "DiffusionSchedule",
    "NoiseRobustStep",
    "rect_schedule",
    "two_step_schedule",
    "fraction_to_step",
    "preset_schedule",
    "SCHEDULE_PRESETS",
    "ddpm_schedule",
    "a_t_coeff",
    "posterior_coeffs",
    "adaptive_lambda_gamma",
]


@dataclass(frozen=True)
class LambdaSchedule:
    """Conditioning strengths over an N-step reconstruction grid.

    ``values[0]`` applies to the first sampler iteration (the noisiest step).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ParameterError("schedule values must be a flat sequence")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ParameterError("schedule values must lie in [0, 1]")

    @property
    def n_steps(self) -> int:
        return self.values.size

    def strength_at(self, step: int) -> float:
        """Strength for 1-based elapsed step index."""
        return float(self.values[step - 1])


def rect_schedule(n_steps: int, i_start: int, i_stop: int, h: float) -> LambdaSchedule:
    """Rectangular window: lambda_i = h for i_start <= i <= i_stop (1-based,
    inclusive), 0 elsewhere."""
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if not 1 <= i_start <= i_stop <= n_steps:
        raise ParameterError(
            f"window [{i_start}, {i_stop}] is not inside [1, {n_steps}]"
        )
    if not 0.0 < h <= 1.0:
        raise ParameterError(f"h must lie in (0, 1], got {h}")
    values = np.zeros(n_steps)
    values[i_start - 1 : i_stop] = h
    return LambdaSchedule(values)


def two_step_schedule(
    n_steps: int,
    i_start: int,
    i_step: int,
    i_end: int,
    h1: float,
    h2: float,
    final_pad: int = 1,
) -> LambdaSchedule:
    """Step-shaped window: h1 on [i_start, i_step), h2 on [i_step, i_end]
    (1-based, i_end inclusive), with the last ``final_pad`` entries forced to
    zero so the path never ends on a fidelity update.

    Out-of-range indices clamp rather than raise.  If the peak exceeds 1 the
    whole vector is divided by it; if padding zeroes everything, the entry
    just before the pad is set to 1.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if not (0.0 <= h1 <= 1.0 and 0.0 <= h2 <= 1.0):
        raise ParameterError("h1 and h2 must lie in [0, 1]")
    if final_pad < 0:
        raise ParameterError(f"final_pad must be >= 0, got {final_pad}")
    lam = np.zeros(n_steps)
    # 0-based: [j0, j1) gets h1, [j1, j2) gets h2 with j2 exclusive.
    j0, j1, j2 = i_start - 1, i_step - 1, i_end
    j0, j1 = min(j0, j1), max(j0, j1)
    j1, j2 = min(j1, j2), max(j1, j2)
    j0 = int(np.clip(j0, 0, n_steps))
    j1 = int(np.clip(j1, 0, n_steps))
    j2 = int(np.clip(j2, 0, n_steps))
    if j0 < j1:
        lam[j0:j1] = h1
    if j1 < j2:
        lam[j1:j2] = h2
    if 0 < final_pad < n_steps:
        lam[-final_pad:] = 0.0
    if lam.max() <= 0.0 and n_steps - final_pad - 1 >= 0:
        lam[n_steps - final_pad - 1] = 1.0
    else:
        lam /= max(1.0, float(lam.max()))
    return LambdaSchedule(lam)


def fraction_to_step(frac: float, n_steps: int) -> int:
    """Map a fractional position (e.g. 0.5N) to a 1-based step index.

    Rounds to the nearest step (banker's rounding at exact ties, which is
    what reproduces the published preset indices); the result is clamped
    into [1, n_steps].
    """
    step = round(frac * n_steps)
    return int(min(max(step, 1), n_steps))


# (kind, fractional parameters).  Rect presets carry (start, stop, h); the
# fine-tuned two-step presets carry (start, step, end, h1, h2, final_pad).
SCHEDULE_PRESETS: dict[str, tuple] = {
    "general": ("rect", 0.5, 0.9, 1.0),
    "colorization": ("two_step", 0.4, 0.50, 0.95, 1.0, 0.3, 1),
    "superres": ("two_step", 0.5, 0.70, 0.85, 1.0, 0.5, 1),
    "deblur": ("two_step", 0.7, 0.80, 0.90, 1.0, 0.3, 1),
    "denoise": ("two_step", 0.5, 0.75, 0.95, 1.0, 0.5, 1),
}


def preset_schedule(name: str, n_steps: int) -> LambdaSchedule:
    """Expand a named schedule preset onto an N-step grid."""
    try:
        preset = SCHEDULE_PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown schedule preset {name!r}") from None
    if preset[0] == "rect":
        _, f_start, f_stop, h = preset
        return rect_schedule(
            n_steps, fraction_to_step(f_start, n_steps), fraction_to_step(f_stop, n_steps), h
        )
    _, f_start, f_step, f_end, h1, h2, pad = preset
    return two_step_schedule(
        n_steps,
        fraction_to_step(f_start, n_steps),
        fraction_to_step(f_step, n_steps),
        fraction_to_step(f_end, n_steps),
        h1,
        h2,
        pad,
    )


@dataclass(frozen=True)
class DiffusionSchedule:
    """DDPM-style schedule: betas, derived alpha cumulative products, the
    posterior noise scale sigma_t, and the measurement noise level."""

    betas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray
    measurement_sigma: float

    @property
    def n_steps(self) -> int:
        return self.betas.size

    def alpha_bar(self, t: int) -> float:
        """alpha_bar_t with alpha_bar_0 defined as 1 (t is 1-based)."""
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[t - 1])


def ddpm_schedule(
    n_steps: int,
    beta_first: float = 1e-4,
    beta_last: float = 0.02,
    sigma_y: float = 0.0,
) -> DiffusionSchedule:
    """Linearly spaced betas with the standard DDPM posterior sigma_t."""
    if n_steps < 2:
        raise ParameterError(f"diffusion schedule needs T >= 2, got {n_steps}")
    if not 0.0 < beta_first <= beta_last < 1.0:
        raise ParameterError(
            f"need 0 < beta_first <= beta_last < 1, got ({beta_first}, {beta_last})"
        )
    if sigma_y < 0.0:
        raise ParameterError(f"sigma_y must be >= 0, got {sigma_y}")
    betas = np.linspace(beta_first, beta_last, n_steps)
    alpha_bars = np.cumprod(1.0 - betas)
    prev = np.concatenate(([1.0], alpha_bars[:-1]))
    sigmas = np.sqrt(betas * (1.0 - prev) / (1.0 - alpha_bars))
    return DiffusionSchedule(betas, alpha_bars, sigmas, float(sigma_y))


def posterior_coeffs(s: DiffusionSchedule, t: int) -> tuple[float, float]:
    """Coefficients (a_t, b_t) of the DDPM posterior mean
    mu_t = a_t x0_hat + b_t x_t for 1-based t."""
    if not 1 <= t <= s.n_steps:
        raise ParameterError(f"t must lie in [1, {s.n_steps}], got {t}")
    beta = float(s.betas[t - 1])
    ab = s.alpha_bar(t)
    ab_prev = s.alpha_bar(t - 1)
    a_t = math.sqrt(ab_prev) * beta / (1.0 - ab)
    b_t = math.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)
    return a_t, b_t


def a_t_coeff(s: DiffusionSchedule, t: int) -> float:
    """sqrt(alpha_bar_{t-1}) beta_t / (1 - alpha_bar_t)."""
    return posterior_coeffs(s, t)[0]


@dataclass(frozen=True)
class NoiseRobustStep:
    """Damped fidelity strength and residual noise scale for one step."""

    a_t: float
    lambda_t: float
    gamma_t: float

    def __post_init__(self):
        if not 0.0 <= self.lambda_t <= 1.0:
            raise ParameterError(f"lambda_t must lie in [0, 1], got {self.lambda_t}")
        if self.gamma_t < 0.0:
            raise ParameterError(f"gamma_t must be >= 0, got {self.gamma_t}")


def adaptive_lambda_gamma(sigma_t: float, a_t: float, sigma_y: float) -> NoiseRobustStep:
    """Noise-robust damping: keep lambda_t as close to 1 as the per-step
    variance budget allows, and set gamma_t to preserve that variance.

        lambda_t = 1             if sigma_t >= a_t sigma_y
                 = sigma_t / (a_t sigma_y)  otherwise
        gamma_t  = sqrt(max(0, sigma_t^2 - a_t^2 lambda_t^2 sigma_y^2))

    With sigma_t = 0 (a flow model has no noise schedule) the update collapses
    to lambda_t = gamma_t = 0 — no fidelity correction survives.
    """
    if sigma_t < 0.0 or a_t < 0.0 or sigma_y < 0.0:
        raise ParameterError("sigma_t, a_t and sigma_y must be >= 0")
    injected = a_t * sigma_y
    if sigma_t == 0.0 and injected == 0.0:
        lam, gamma = 0.0, 0.0
    elif sigma_t >= injected:
        lam = 1.0
        gamma = math.sqrt(max(0.0, sigma_t**2 - injected**2))
    else:
        # lambda is chosen to spend the whole variance budget, so the
        # residual noise vanishes identically
        lam = sigma_t / injected
        gamma = 0.0
    return NoiseRobustStep(a_t=a_t, lambda_t=lam, gamma_t=gamma)

"""Rectified-flow interpolation, the analytic Gaussian-mixture velocity
oracle, and Euler integration for generation and inversion.

Time convention: t = 0 is the clean end, t = 1 is the noise end, and
intermediate states interpolate as x_t = (1-t) x0 + t x1 with target velocity
x1 - x0.  Generation therefore integrates from t = 1 down to t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ParameterError, ShapeError, SingularityError

__all__ = [
    "VelocityField",
    "TimeGrid",
    "GmmTarget",
    "interpolate",
    "gmm_velocity",
    "gmm_velocity_field",
    "euler_generate",
    "euler_invert",
    "denoise_estimate",
    "project_back",
]

# Anything mapping (state, time) -> velocity of the same shape.
VelocityField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """N+1 strictly increasing times with t_0 = 0 and t_N = 1."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 2:
            raise ParameterError("time grid needs at least two points")
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ParameterError("time grid endpoints must be exactly 0 and 1")
        if np.any(np.diff(times) <= 0.0):
            raise ParameterError("time grid must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @classmethod
    def uniform(cls, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
        return cls(np.linspace(0.0, 1.0, n_steps + 1))


@dataclass(frozen=True)
class GmmTarget:
    """Isotropic Gaussian mixture standing in for the clean distribution.

    ``means`` has shape (K, d); ``dims`` records the tensor shape the flat
    dimension d corresponds to.
    """

    weights: np.ndarray
    means: np.ndarray
    stdevs: np.ndarray
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        s = np.asarray(self.stdevs, dtype=np.float64)
        if w.ndim != 1 or m.shape[0] != w.size or s.shape != w.shape:
            raise ParameterError("weights, means and stdevs disagree on K")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("weights must be nonnegative and sum to 1")
        if np.any(s < 0):
            raise ParameterError("stdevs must be >= 0")
        dims = tuple(self.dims) if self.dims else (m.shape[1],)
        if int(np.prod(dims)) != m.shape[1]:
            raise ParameterError(f"dims {dims} do not match mean length {m.shape[1]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stdevs", s)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n clean samples, shape (n, d)."""
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + self.stdevs[comp, None] * eps

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def variance(self) -> np.ndarray:
        """Per-dimension marginal variance of the mixture."""
        second = self.weights @ (self.means**2 + self.stdevs[:, None] ** 2)
        return second - self.mean() ** 2


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    """(1-t) x0 + t x1 for t in [0, 1]."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    _check_same_shape(x0, x1, "interpolate")
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * x0 + t * x1


def gmm_velocity(x: np.ndarray, t: float, target: GmmTarget) -> np.ndarray:
    """Exact marginal velocity E[x1 - x0 | x_t = x] for a GMM clean
    distribution and standard-normal noise.

    Per component k with s_k^2 = (1-t)^2 sigma_k^2 + t^2:

        r_k      ∝ w_k N(x; (1-t) mu_k, s_k^2 I)
        E[x0|k]  = mu_k + (1-t) sigma_k^2 / s_k^2 (x - (1-t) mu_k)
        E[x1|k]  = t / s_k^2 (x - (1-t) mu_k)

    and the output is sum_k r_k (E[x1|k] - E[x0|k]).  Responsibilities are
    computed with log-sum-exp stabilization because s_k^2 can span orders of
    magnitude across t.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size != target.dim:
        raise ShapeError(f"state has {x.size} entries, target has {target.dim}")
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must lie in [0, 1], got {t}")
    s2 = (1.0 - t) ** 2 * target.stdevs**2 + t**2
    if np.any(s2 <= 0.0):
        raise SingularityError(
            "marginal velocity is undefined at t = 0 for a zero-spread component"
        )
    flat = x.ravel()
    centered = flat[None, :] - (1.0 - t) * target.means  # (K, d)
    sq = np.einsum("kd,kd->k", centered, centered)
    d = target.dim
    with np.errstate(divide="ignore"):
        log_r = np.log(target.weights) - 0.5 * (d * np.log(2.0 * np.pi * s2) + sq / s2)
    log_r -= log_r.max()
    r = np.exp(log_r)
    r /= r.sum()
    e0 = target.means + ((1.0 - t) * target.stdevs**2 / s2)[:, None] * centered
    e1 = (t / s2)[:, None] * centered
    return (r @ (e1 - e0)).reshape(x.shape)


def gmm_velocity_field(target: GmmTarget) -> VelocityField:
    """Close over a GmmTarget as a plain (x, t) -> velocity callable."""
    return lambda x, t: gmm_velocity(x, t, target)


def _step(
    x: np.ndarray, t_from: float, t_to: float, t_eval: float, v: VelocityField, step: int
) -> np.ndarray:
    vel = np.asarray(v(x, t_eval), dtype=np.float64)
    _check_same_shape(vel, x, "velocity")
    if not np.all(np.isfinite(vel)):
        raise NumericalError("velocity is non-finite", step=step)
    return x + (t_to - t_from) * vel


def euler_generate(
    v: VelocityField, x_start: np.ndarray, grid: TimeGrid
) -> list[np.ndarray]:
    """Integrate x_{t_{i-1}} = x_{t_i} + (t_{i-1} - t_i) v(x_{t_i}, t_i) from
    the noise end down to t = 0; returns [x_{t_N}, ..., x_{t_0}]."""
    x = np.asarray(x_start, dtype=np.float64)
    t = grid.times
    traj = [x]
    for i in range(grid.n_steps, 0, -1):
        x = _step(x, t[i], t[i - 1], t[i], v, step=grid.n_steps - i + 1)
        traj.append(x)
    return traj


def euler_invert(
    v: VelocityField, x_clean: np.ndarray, grid: TimeGrid
) -> list[np.ndarray]:
    """Run the Euler recurrence with increasing t, from the clean end to the
    noise end; returns [x_{t_0}, ..., x_{t_N}].

    Each segment evaluates the velocity at its upper time, so the field is
    only queried at t_1..t_N — the clean endpoint, where analytic oracles can
    be singular, is never evaluated.
    """
    x = np.asarray(x_clean, dtype=np.float64)
    t = grid.times
    traj = [x]
    for i in range(grid.n_steps):
        x = _step(x, t[i], t[i + 1], t[i + 1], v, step=i + 1)
        traj.append(x)
    return traj


def denoise_estimate(
    x_t: np.ndarray, t: float, eta: np.ndarray, eps: float = 1e-6
) -> np.ndarray:
    """Clean-image estimate x_t / ((1-t)+eps) - t eta / ((1-t)+eps).

    Inverts the interpolation assuming x_t = (1-t) x0 + t eta; the eps term
    keeps the division stable near t = 1, where estimation errors are
    amplified by 1/((1-t)+eps).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    _check_same_shape(x_t, eta, "denoise_estimate")
    if eps <= 0.0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    return (x_t - t * eta) / ((1.0 - t) + eps)


def project_back(x0_bar: np.ndarray, t: float, eta: np.ndarray) -> np.ndarray:
    """(1-t) x0_bar + t eta — re-embed a clean estimate at time t."""
    return interpolate(x0_bar, eta, t)


def trajectory_rms(traj: Sequence[np.ndarray], reference: np.ndarray) -> float:
    """RMS error of the trajectory endpoint against a reference state."""
    diff = np.asarray(traj[-1], dtype=np.float64) - np.asarray(reference, dtype=np.float64)
    return float(np.sqrt(np.mean(diff**2)))

"""A small fully-connected velocity field with hand-written reverse-mode
gradients, trained with the rectified-flow regression objective.

The network concatenates the flattened state with sinusoidal time features
[sin(2^j pi t), cos(2^j pi t)] for j < F/2 and applies tanh hidden layers
with a linear output of the data dimension.  The output head is
parameterized as a clean-state prediction m(x, t) and converted to a
velocity analytically,

    v(x, t) = (x - m(x, t)) / (t + time_floor),

which makes the stiff near-clean contraction exact instead of asking the
trunk to realize a 1/t gain; the floor bounds the gain (and the regression
gradients) by 1/time_floor.  Training still regresses v onto x1 - x0 under
squared error.  Keeping the backward pass explicit lets the gradient check
compare it against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError, ShapeError, TrainingError
from .flow_core import VelocityField

__all__ = [
    "VelocityNet",
    "TrainConfig",
    "net_init",
    "net_forward",
    "train",
    "grad_check",
    "velocity_field",
    "dataset_sampler",
]


@dataclass
class VelocityNet:
    data_dim: int
    time_features: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    time_floor: float = 0.01

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float | None = 0.9  # None selects plain SGD
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0.0:
            raise ParameterError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.momentum is not None and not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")


def net_init(
    data_dim: int,
    hidden: list[int],
    time_features: int,
    seed: int,
    time_floor: float = 0.01,
) -> VelocityNet:
    """Fan-in-scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for the
    weights, zero biases; reproducible given the seed."""
    if data_dim < 1:
        raise ParameterError(f"data_dim must be >= 1, got {data_dim}")
    if not hidden:
        raise ParameterError("at least one hidden layer is required")
    if any(h < 1 for h in hidden):
        raise ParameterError(f"hidden widths must be positive, got {hidden}")
    if time_features < 2 or time_features % 2:
        raise ParameterError(
            f"time_features must be a positive even count, got {time_features}"
        )
    if time_floor <= 0.0:
        raise ParameterError(f"time_floor must be > 0, got {time_floor}")
    rng = np.random.default_rng(seed)
    sizes = [data_dim + time_features] + list(hidden) + [data_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return VelocityNet(data_dim, time_features, weights, biases, time_floor)


def _time_features(t: np.ndarray, count: int) -> np.ndarray:
    """(B,) times -> (B, count) sinusoidal features."""
    j = np.arange(count // 2)
    phase = (2.0**j)[None, :] * np.pi * t[:, None]
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


def _forward_batch(net: VelocityNet, x: np.ndarray, t: np.ndarray):
    feats = np.concatenate([x, _time_features(t, net.time_features)], axis=1)
    activations = [feats]
    h = feats
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k < last:
            h = np.tanh(h)
        activations.append(h)
    # clean-state head -> velocity
    gain = 1.0 / (t + net.time_floor)
    velocity = (x - h) * gain[:, None]
    return velocity, (activations, gain)


def net_forward(net: VelocityNet, x: np.ndarray, t: float) -> np.ndarray:
    """Velocity prediction for a single state; pure in all arguments."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != net.data_dim:
        raise ShapeError(f"input has {x.size} entries, net expects {net.data_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite network input")
    out, _ = _forward_batch(net, x.reshape(1, -1), np.array([float(t)]))
    return out[0].reshape(x.shape)


def _loss_and_grads(net: VelocityNet, x: np.ndarray, t: np.ndarray, target: np.ndarray):
    """Batch loss mean_b ||target_b - out_b||^2 and its parameter gradients."""
    out, (acts, gain) = _forward_batch(net, x, t)
    batch = x.shape[0]
    diff = out - target
    loss = float(np.sum(diff**2) / batch)
    # velocity = (x - m) * gain, so dL/dm = -gain * dL/dvelocity
    grad = (2.0 * diff / batch) * (-gain[:, None])
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        grads_w[k] = acts[k].T @ grad
        grads_b[k] = grad.sum(axis=0)
        if k > 0:
            grad = (grad @ net.weights[k].T) * (1.0 - acts[k] ** 2)
    return loss, grads_w, grads_b


def _draw_regression_batch(sample_x0, rng, n, data_dim):
    x0 = np.asarray(sample_x0(rng, n), dtype=np.float64)
    if x0.shape != (n, data_dim):
        raise ShapeError(f"data source returned {x0.shape}, expected ({n}, {data_dim})")
    x1 = rng.standard_normal(x0.shape)
    t = rng.uniform(0.0, 1.0, n)
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    return x_t, t, x1 - x0


def train(net: VelocityNet, sample_x0, cfg: TrainConfig) -> np.ndarray:
    """Regress v(x_t, t) onto x1 - x0 along x_t = (1-t) x0 + t x1 with
    x1 ~ N(0, I) and per-sample t ~ U(0, 1); the net is updated in place.

    ``sample_x0`` is a callable (rng, n) -> (n, data_dim) array of clean
    samples.  The returned curve is the loss on a fixed probe batch drawn
    once up front, evaluated after each update, so it reflects parameter
    progress only (a zero learning rate gives a constant curve).
    """
    rng = np.random.default_rng(cfg.seed)
    probe = _draw_regression_batch(sample_x0, rng, cfg.batch_size, net.data_dim)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    losses = np.empty(cfg.steps)
    for step in range(cfg.steps):
        x_t, t, target = _draw_regression_batch(sample_x0, rng, cfg.batch_size, net.data_dim)
        _, gw, gb = _loss_and_grads(net, x_t, t, target)
        if cfg.momentum is None:
            for w, b, dw, db in zip(net.weights, net.biases, gw, gb):
                w -= cfg.learning_rate * dw
                b -= cfg.learning_rate * db
        else:
            for w, b, vw, vb, dw, db in zip(net.weights, net.biases, vel_w, vel_b, gw, gb):
                vw *= cfg.momentum
                vw += dw
                vb *= cfg.momentum
                vb += db
                w -= cfg.learning_rate * vw
                b -= cfg.learning_rate * vb
        out, _ = _forward_batch(net, probe[0], probe[1])
        loss = float(np.sum((out - probe[2]) ** 2) / cfg.batch_size)
        if not np.isfinite(loss):
            raise TrainingError("training loss diverged", step=step)
        losses[step] = loss
    return losses


def grad_check(
    net: VelocityNet,
    x: np.ndarray,
    t: float,
    n_params: int = 50,
    seed: int = 0,
    fd_step: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients of the batch loss and
    central finite differences over >= n_params randomly chosen parameters."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    t_arr = np.array([float(t)])
    target = rng.standard_normal((1, net.data_dim))
    _, gw, gb = _loss_and_grads(net, x, t_arr, target)

    params = [(("w", k), net.weights[k], gw[k]) for k in range(len(net.weights))]
    params += [(("b", k), net.biases[k], gb[k]) for k in range(len(net.biases))]
    total = sum(p.size for _, p, _ in params)
    picks = rng.choice(total, size=min(max(n_params, 50), total), replace=False)

    offsets = np.cumsum([0] + [p.size for _, p, _ in params])
    worst = 0.0
    for flat_idx in picks:
        slot = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        _, param, grad = params[slot]
        local = int(flat_idx - offsets[slot])
        idx = np.unravel_index(local, param.shape)
        orig = param[idx]
        param[idx] = orig + fd_step
        lo_plus, _, _ = _loss_and_grads(net, x, t_arr, target)
        param[idx] = orig - fd_step
        lo_minus, _, _ = _loss_and_grads(net, x, t_arr, target)
        param[idx] = orig
        fd = (lo_plus - lo_minus) / (2.0 * fd_step)
        denom = max(abs(grad[idx]), abs(fd), 1e-8)
        worst = max(worst, abs(grad[idx] - fd) / denom)
    return worst


def velocity_field(net: VelocityNet) -> VelocityField:
    """Adapt the net to the (state, time) -> velocity sampler interface,
    flattening and restoring the state shape."""
    return lambda x, t: net_forward(net, np.asarray(x).ravel(), t).reshape(np.shape(x))


def dataset_sampler(images: np.ndarray):
    """Draw flattened rows of a stacked dataset with replacement."""
    flat = np.asarray(images, dtype=np.float64).reshape(len(images), -1)

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return flat[rng.integers(0, len(flat), size=n)]

    return sample

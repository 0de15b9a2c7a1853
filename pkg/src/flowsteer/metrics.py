"""Fidelity and perceptual-proxy metrics for the evaluation harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, ParameterError
from .operators import DegradationOperator

__all__ = [
    "psnr",
    "mse",
    "ssim",
    "histogram_match",
    "measurement_residual",
    "MetricReport",
    "evaluate_restoration",
    "METRIC_CSV_HEADER",
]


def _check_pair(x: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"image shapes {x.shape} and {ref.shape} differ")
    return x, ref


def mse(x: np.ndarray, ref: np.ndarray) -> float:
    x, ref = _check_pair(x, ref)
    return float(np.mean((x - ref) ** 2))


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); identical images report +inf."""
    if peak <= 0:
        raise ParameterError(f"peak must be > 0, got {peak}")
    err = mse(x, ref)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / err))


def ssim(
    x: np.ndarray,
    ref: np.ndarray,
    window_size: int = 8,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """Mean of the windowed SSIM map over a sliding uniform window, channels
    averaged.  Inputs are (C, H, W) or (H, W)."""
    x, ref = _check_pair(x, ref)
    if x.ndim == 2:
        x, ref = x[None], ref[None]
    if x.ndim != 3:
        raise ShapeError(f"ssim expects (C, H, W) or (H, W), got {x.shape}")
    if window_size > min(x.shape[1], x.shape[2]):
        raise ShapeError(
            f"window {window_size} exceeds image extent {x.shape[1]}x{x.shape[2]}"
        )
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    wx = sliding_window_view(x, (window_size, window_size), axis=(1, 2))
    wr = sliding_window_view(ref, (window_size, window_size), axis=(1, 2))
    mu_x = wx.mean(axis=(-2, -1))
    mu_r = wr.mean(axis=(-2, -1))
    var_x = (wx**2).mean(axis=(-2, -1)) - mu_x**2
    var_r = (wr**2).mean(axis=(-2, -1)) - mu_r**2
    cov = (wx * wr).mean(axis=(-2, -1)) - mu_x * mu_r
    ssim_map = ((2 * mu_x * mu_r + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2)
    )
    return float(ssim_map.mean())


def histogram_match(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Per channel, replace the sorted values of x by the sorted values of
    ref at equal ranks (ties broken by stable original order), so the output
    histogram equals ref's exactly as a multiset."""
    x, ref = _check_pair(x, ref)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"histogram_match expects (3, H, W), got {x.shape}")
    out = np.empty_like(x)
    for c in range(3):
        flat = x[c].ravel()
        order = np.argsort(flat, kind="stable")
        matched = np.empty_like(flat)
        matched[order] = np.sort(ref[c].ravel())
        out[c] = matched.reshape(x[c].shape)
    return out


def measurement_residual(
    op: DegradationOperator, x_hat: np.ndarray, y: np.ndarray
) -> tuple[float, float]:
    """(L2, Linf) norms of A x_hat - y."""
    r = op.apply(x_hat) - np.asarray(y, dtype=np.float64)
    return float(np.linalg.norm(r.ravel())), float(np.max(np.abs(r)))


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    residual_l2: float
    residual_linf: float
    histogram_matched: bool

    # optional perceptual fields reserved so the CSV schema can grow without
    # a format change
    lpips: float | None = None
    clip_similarity: float | None = None


METRIC_CSV_HEADER = (
    "task,operator,schedule,seed,psnr,ssim,mse,residual_l2,residual_linf,histogram_matched"
)


def evaluate_restoration(
    op: DegradationOperator,
    x_hat: np.ndarray,
    y: np.ndarray,
    ground_truth: np.ndarray,
    histogram_match_first: bool | None = None,
    peak: float = 1.0,
) -> MetricReport:
    """Score a restoration against ground truth and the measurement.

    Colorization metrics are computed after per-channel histogram matching
    against the ground truth, so global brightness/saturation shifts do not
    dominate; other tasks compare directly.
    """
    if histogram_match_first is None:
        histogram_match_first = op.kind == "colorization"
    scored = histogram_match(x_hat, ground_truth) if histogram_match_first else x_hat
    res_l2, res_linf = measurement_residual(op, x_hat, y)
    return MetricReport(
        psnr=psnr(scored, ground_truth, peak),
        ssim=ssim(scored, ground_truth, peak=peak),
        mse=mse(scored, ground_truth),
        residual_l2=res_l2,
        residual_linf=res_linf,
        histogram_matched=bool(histogram_match_first),
    )

"""Matplotlib renderings saved next to the delimited outputs.

Every function writes one PNG and closes its figure; nothing is shown
interactively (the Agg backend is forced so headless runs work).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_image_grid",
    "save_loss_curve",
    "save_trace_plot",
    "save_schedule_sweep",
    "save_bar_chart",
    "save_metric_summary",
]


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_image_grid(images, path, ncols: int = 8, title: str | None = None) -> Path:
    """Contact sheet of (3, H, W) images clamped into [0, 1]."""
    n = len(images)
    ncols = min(ncols, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 1.6 * nrows), squeeze=False)
    for k, ax in enumerate(axes.ravel()):
        ax.axis("off")
        if k < n:
            ax.imshow(np.clip(np.moveaxis(images[k], 0, -1), 0.0, 1.0))
    if title:
        fig.suptitle(title)
    return _finish(fig, path)


def save_loss_curve(losses, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _finish(fig, path)


def save_trace_plot(steps, mean_residuals, lambdas, path) -> Path:
    """Mean per-step measurement residual with the schedule on a twin axis."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, mean_residuals, color="tab:blue", label="mean residual L2")
    ax.set_xlabel("reconstruction step")
    ax.set_ylabel("residual L2", color="tab:blue")
    ax.set_yscale("log")
    ax2 = ax.twinx()
    ax2.step(steps, lambdas, where="mid", color="tab:orange", alpha=0.7, label="lambda")
    ax2.set_ylabel("lambda", color="tab:orange")
    ax2.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    return _finish(fig, path)


def save_schedule_sweep(start_fracs, mean_psnrs, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(start_fracs, mean_psnrs, marker="o")
    ax.set_xlabel("window start (fraction of steps)")
    ax.set_ylabel("mean PSNR [dB]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _finish(fig, path)


def save_bar_chart(labels, values, ylabel, path) -> Path:
    fig, ax = plt.subplots(figsize=(max(3.0, 0.9 * len(labels)), 3.5))
    ax.bar(range(len(values)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _finish(fig, path)


def save_metric_summary(psnrs, ssims, path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.bar(range(len(psnrs)), psnrs, color="tab:blue")
    ax1.set_xlabel("image")
    ax1.set_ylabel("PSNR [dB]")
    ax2.bar(range(len(ssims)), ssims, color="tab:green")
    ax2.set_xlabel("image")
    ax2.set_ylabel("SSIM")
    fig.tight_layout()
    return _finish(fig, path)

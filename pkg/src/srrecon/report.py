"""Figure rendering for evaluation reports.

Writes PNG files next to the delimited report output: magnitude
comparison panels per record and a per-method metric summary chart.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def comparison_figure(truth: np.ndarray, outputs: dict, path: str, record_id: str = ""):
    """One row of magnitude images: ground truth plus each method."""
    panels = [("truth", truth)] + list(outputs.items())
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3.2))
    if len(panels) == 1:
        axes = [axes]
    vmax = float(np.abs(truth).max()) or 1.0
    for ax, (label, img) in zip(axes, panels):
        ax.imshow(np.abs(img), cmap="gray", vmin=0, vmax=vmax)
        ax.set_title(f"{label}", fontsize=10)
        ax.axis("off")
    if record_id:
        fig.suptitle(record_id)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def metrics_figure(reports: list, path: str):
    """Bar chart of mean PSNR and SSIM (with std error bars) per method."""
    methods = [r.method for r in reports]
    aggs = [r.aggregates() for r in reports]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(methods))
    ax1.bar(x, [a.get("psnr_mean", 0) for a in aggs], yerr=[a.get("psnr_std", 0) for a in aggs])
    ax1.set_xticks(x, methods, rotation=20)
    ax1.set_ylabel("PSNR (dB)")
    ax2.bar(x, [a.get("ssim_mean", 0) for a in aggs], yerr=[a.get("ssim_std", 0) for a in aggs])
    ax2.set_xticks(x, methods, rotation=20)
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mask_figure(mask: np.ndarray, path: str, title: str = ""):
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(mask.astype(float), cmap="gray", interpolation="nearest")
    ax.set_title(title)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def trace_figure(trace: list, path: str, title: str = "data fidelity"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(trace)
    ax.set_xlabel("iteration")
    ax.set_ylabel("0.5 ||Ax - y||^2")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path

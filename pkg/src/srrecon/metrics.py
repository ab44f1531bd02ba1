"""Reference-based image quality metrics and per-method reports.

PSNR and SSIM are computed on magnitude images; SSIM uses an 11x11
Gaussian window (sigma 1.5) with K1=0.01, K2=0.03 and dynamic range
max(|ref|) unless a fixed range is supplied.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 99.0


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """10*log10(peak^2 / MSE) with peak = max(|ref|); capped at 99 dB."""
    ref = np.abs(np.asarray(ref))
    test = np.abs(np.asarray(test))
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    peak = float(ref.max())
    if peak == 0.0:
        raise ValueError("reference image is identically zero")
    mse_val = float(np.mean((ref - test) ** 2))
    if mse_val < 1e-12 * peak**2:
        return PSNR_CAP
    return 10.0 * np.log10(peak**2 / mse_val)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(
    ref: np.ndarray,
    test: np.ndarray,
    fixed_range: float | None = None,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean local SSIM over valid window positions, on magnitudes."""
    ref = np.abs(np.asarray(ref)).astype(np.float64)
    test = np.abs(np.asarray(test)).astype(np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    w = _gaussian_window()
    if min(ref.shape) < w.shape[0]:
        raise ValueError(f"image {ref.shape} smaller than window {w.shape}")
    L = float(ref.max()) if fixed_range is None else float(fixed_range)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2

    mu1 = convolve2d(ref, w, mode="valid")
    mu2 = convolve2d(test, w, mode="valid")
    s11 = convolve2d(ref * ref, w, mode="valid") - mu1**2
    s22 = convolve2d(test * test, w, mode="valid") - mu2**2
    s12 = convolve2d(ref * test, w, mode="valid") - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1**2 + mu2**2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    method: str
    manifest: str
    per_record: dict = field(default_factory=dict)  # record_id -> {psnr, ssim}

    def aggregates(self) -> dict:
        if not self.per_record:
            return {"n": 0}
        p = np.array([v["psnr"] for v in self.per_record.values()])
        s = np.array([v["ssim"] for v in self.per_record.values()])
        return {
            "n": len(p),
            "psnr_mean": float(p.mean()),
            "psnr_std": float(p.std()),
            "ssim_mean": float(s.mean()),
            "ssim_std": float(s.std()),
        }

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "manifest": self.manifest,
            "per_record": self.per_record,
            "aggregates": self.aggregates(),
        }


def evaluate(dataset, outputs_dir: str, method: str = "method") -> MetricReport:
    """Score every test record's output grid against its ground truth."""
    from .grid import read_grid

    report = MetricReport(method, dataset.manifest_path)
    for rec in dataset.split("test"):
        out_path = os.path.join(outputs_dir, rec.record_id)
        if not os.path.exists(out_path + ".hdr"):
            raise FileNotFoundError(
                f"missing output for record {rec.record_id}: {out_path}.hdr"
            )
        truth = read_grid(rec.files["truth"]).data
        out = read_grid(out_path).data
        report.per_record[rec.record_id] = {
            "psnr": psnr(truth, out),
            "ssim": ssim(truth, out),
        }
    return report


def format_table(reports: list) -> str:
    """Aligned-column plain-text table across methods and records."""
    lines = []
    header = f"{'record':<12}" + "".join(
        f"{r.method + ' PSNR':>16}{r.method + ' SSIM':>16}" for r in reports
    )
    lines.append(header)
    record_ids = sorted({rid for r in reports for rid in r.per_record})
    for rid in record_ids:
        row = f"{rid:<12}"
        for r in reports:
            v = r.per_record.get(rid)
            row += (
                f"{v['psnr']:>16.3f}{v['ssim']:>16.4f}" if v else f"{'-':>16}{'-':>16}"
            )
        lines.append(row)
    row = f"{'mean':<12}"
    for r in reports:
        a = r.aggregates()
        if a["n"]:
            row += f"{a['psnr_mean']:>16.3f}{a['ssim_mean']:>16.4f}"
        else:
            row += f"{'-':>16}{'-':>16}"
    lines.append(row)
    return "\n".join(lines) + "\n"


def write_reports(reports: list, out_base: str) -> None:
    """Emit JSON, CSV, and aligned plain text for a set of method reports."""
    with open(out_base + ".json", "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2)
    with open(out_base + ".csv", "w", encoding="utf-8") as f:
        f.write("method,record,psnr,ssim\n")
        for r in reports:
            for rid, v in sorted(r.per_record.items()):
                f.write(f"{r.method},{rid},{v['psnr']:.6f},{v['ssim']:.6f}\n")
    with open(out_base + ".txt", "w", encoding="utf-8") as f:
        f.write(format_table(reports))

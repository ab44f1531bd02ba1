"""Synthetic ground truth, coil maps, and retrospective undersampling.

Stands in for an in-vivo acquisition: random soft-edged ellipse phantoms,
Gaussian-profiled coil sensitivities, and noisy application of the
forward model produce fully reproducible datasets.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.special import expit

from .grid import ComplexGrid, GridError, read_grid, write_grid
from .masks import MaskSpec, SamplingMask, grid_to_mask, mask_to_grid, poisson_disk_mask
from .operators import (
    ForwardModel,
    SensitivitySet,
    dft,
    forward,
    idft,
    zeropad_kspace,
)

# declared bound on per-pixel sensitivity gradient magnitude (64x64 scale)
SENS_SMOOTHNESS_BOUND = 0.15


@dataclass
class PhantomSpec:
    hr_dims: tuple[int, int] = (64, 64)
    n_shapes: int = 8
    intensity_range: tuple[float, float] = (0.2, 1.0)
    complex_phase: bool = True
    seed: int = 0
    sigma_noise: float = 0.01

    def __post_init__(self):
        self.hr_dims = tuple(int(d) for d in self.hr_dims)
        if any(d <= 0 for d in self.hr_dims):
            raise ValueError(f"non-positive hr_dims {self.hr_dims}")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be >= 0")


def make_phantom(spec: PhantomSpec) -> ComplexGrid:
    """Random soft-edged ellipses, added then clamped; magnitude in [0,1]."""
    ny, nx = spec.hr_dims
    rng = np.random.default_rng(spec.seed)
    yy, xx = np.mgrid[0:ny, 0:nx]
    u = (yy + 0.5) / ny
    v = (xx + 0.5) / nx
    mag = np.zeros((ny, nx))
    for _ in range(spec.n_shapes):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        ay, ax = rng.uniform(0.05, 0.35, size=2)
        theta = rng.uniform(0, np.pi)
        lo, hi = spec.intensity_range
        amp = rng.uniform(lo, hi)
        ct, st = np.cos(theta), np.sin(theta)
        ru = ((u - cy) * ct + (v - cx) * st) / ay
        rv = (-(u - cy) * st + (v - cx) * ct) / ax
        r2 = ru**2 + rv**2
        edge = 0.08
        mag += amp * expit((1.0 - r2) / edge)
    mag = np.clip(mag, 0.0, 1.0)
    if spec.complex_phase:
        # smooth low-order phase ramp plus a gentle quadratic term
        a, b, c = rng.uniform(-1.0, 1.0, size=3)
        phase = np.pi * (a * (u - 0.5) + b * (v - 0.5) + c * ((u - 0.5) ** 2 - (v - 0.5) ** 2))
        data = mag * np.exp(1j * phase)
        peak = np.abs(data).max()
        if peak > 1.0:  # guard against rounding in the unit phasor
            data /= peak
    else:
        data = mag.astype(np.complex128)
    return ComplexGrid(data, domain="image")


def make_sens(hr_dims, n_coils: int, seed: int = 0) -> SensitivitySet:
    """Smooth Gaussian-profiled coil maps, RSS-normalized to 1 everywhere."""
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    ny, nx = hr_dims
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:ny, 0:nx]
    u = (yy + 0.5) / ny - 0.5
    v = (xx + 0.5) / nx - 0.5
    maps = np.empty((n_coils, ny, nx), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils + rng.uniform(-0.2, 0.2)
        cy, cx = 0.55 * np.sin(ang), 0.55 * np.cos(ang)
        sigma = 0.6 + rng.uniform(-0.05, 0.05)
        profile = np.exp(-((u - cy) ** 2 + (v - cx) ** 2) / (2 * sigma**2))
        # mild linear phase per coil keeps maps complex but smooth
        py, px = rng.uniform(-1.0, 1.0, size=2)
        maps[c] = profile * np.exp(1j * np.pi * (py * u + px * v))
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    maps /= rss[None, ...]
    return SensitivitySet(maps)


def acquire(
    x: ComplexGrid,
    sens: SensitivitySet,
    mask: SamplingMask,
    lr_dims,
    sigma: float,
    seed: int = 0,
) -> ComplexGrid:
    """y = A x + noise, complex Gaussian on sampled points only."""
    model = ForwardModel(mask.sampled, tuple(lr_dims), x.dims, sens)
    y = forward(model, x.data)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        shape = y.shape
        noise = sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        y = y + noise * mask.sampled[None, ...]
    return ComplexGrid(y, domain="kspace")


def estimate_sens_lowres(
    y_center: ComplexGrid, hr_dims, eps: float = 1e-3
) -> SensitivitySet:
    """Low-resolution surrogate sensitivity estimate from calibration data.

    Zero-pads the fully sampled k-space center per coil, inverse
    transforms, and divides by the RSS image; voxels below eps of the
    peak RSS are zeroed (outside support).
    """
    k = zeropad_kspace(y_center.data, tuple(hr_dims))
    imgs = idft(k, axes=tuple(range(1, k.ndim)))
    rss = np.sqrt(np.sum(np.abs(imgs) ** 2, axis=0))
    peak = float(rss.max())
    if peak == 0.0:
        return SensitivitySet(np.zeros_like(imgs))
    support = rss > eps * peak
    maps = np.where(support[None, ...], imgs / np.where(support, rss, 1.0)[None, ...], 0)
    return SensitivitySet(maps)


def downsample_sens(sens: SensitivitySet, lr_dims, eps: float = 1e-6) -> SensitivitySet:
    """Sensitivity maps for the LR grid: k-space crop then re-normalize."""
    axes = tuple(range(1, sens.maps.ndim))
    from .operators import crop_kspace

    k = crop_kspace(dft(sens.maps, axes=axes), tuple(lr_dims))
    imgs = idft(k, axes=axes)
    rss = np.sqrt(np.sum(np.abs(imgs) ** 2, axis=0))
    support = rss > eps
    maps = np.where(support[None], imgs / np.where(support, rss, 1.0)[None], 0)
    return SensitivitySet(maps)


@dataclass
class DatasetRecord:
    record_id: str
    seed: int
    split: str
    files: dict


@dataclass
class Dataset:
    manifest_path: str
    hr_dims: tuple[int, int]
    lr_dims: tuple[int, int]
    n_coils: int
    records: list

    def split(self, tag: str):
        return [r for r in self.records if r.split == tag]


def build_dataset(
    n_records: int,
    phantom_spec: PhantomSpec,
    mask_spec: MaskSpec,
    out_dir: str,
    n_coils: int = 8,
    train_fraction: float = 0.8,
    base_seed: int = 0,
) -> Dataset:
    """Generate records and a manifest; fully reproducible from the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    lr_dims = mask_spec.dims
    n_train = int(round(n_records * train_fraction))
    records = []
    for i in range(n_records):
        seed = base_seed + 1000 * (i + 1)
        rec_dir = os.path.join(out_dir, f"rec{i:04d}")
        os.makedirs(rec_dir, exist_ok=True)
        pspec = PhantomSpec(**{**asdict(phantom_spec), "seed": seed})
        mspec = MaskSpec(**{**asdict(mask_spec), "seed": seed + 1})
        truth = make_phantom(pspec)
        sens = make_sens(pspec.hr_dims, n_coils, seed + 2)
        mask = poisson_disk_mask(mspec)
        y = acquire(truth, sens, mask, lr_dims, pspec.sigma_noise, seed + 3)
        files = {
            "truth": os.path.join(rec_dir, "truth"),
            "sens": os.path.join(rec_dir, "sens"),
            "y": os.path.join(rec_dir, "y"),
            "mask": os.path.join(rec_dir, "mask"),
        }
        write_grid(files["truth"], truth)
        write_grid(files["sens"], ComplexGrid(sens.maps, domain="image"))
        write_grid(files["y"], y)
        write_grid(files["mask"], mask_to_grid(mask))
        split = "train" if i < n_train else "test"
        records.append(DatasetRecord(f"rec{i:04d}", seed, split, files))

    manifest = {
        "schema_version": 1,
        "hr_dims": list(phantom_spec.hr_dims),
        "lr_dims": list(lr_dims),
        "n_coils": n_coils,
        "phantom_spec": asdict(phantom_spec),
        "mask_spec": asdict(mask_spec),
        "base_seed": base_seed,
        "records": [asdict(r) for r in records],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return Dataset(manifest_path, phantom_spec.hr_dims, lr_dims, n_coils, records)


def load_manifest(manifest_path: str) -> Dataset:
    with open(manifest_path, "r", encoding="utf-8") as f:
        m = json.load(f)
    records = [DatasetRecord(**r) for r in m["records"]]
    return Dataset(
        manifest_path,
        tuple(m["hr_dims"]),
        tuple(m["lr_dims"]),
        int(m["n_coils"]),
        records,
    )


def load_record(rec: DatasetRecord, center_size=(0, 0)):
    """Load one record's grids, checking dim consistency."""
    truth = read_grid(rec.files["truth"])
    sens = SensitivitySet(read_grid(rec.files["sens"]).data)
    y = read_grid(rec.files["y"])
    mask = grid_to_mask(read_grid(rec.files["mask"]), center_size)
    if sens.spatial_dims != truth.dims:
        raise GridError(f"{rec.record_id}: sens dims {sens.spatial_dims} != truth {truth.dims}")
    if y.dims != (sens.n_coils,) + mask.dims:
        raise GridError(f"{rec.record_id}: y dims {y.dims} inconsistent with mask/coils")
    return truth, sens, y, mask

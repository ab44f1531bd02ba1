"""Undersampling mask generators: variable-density Poisson disk, uniform
random, and fully sampled calibration-center blocks.

All generators keep the central calibration block fully sampled and are
deterministic for a fixed spec (seed included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .grid import ComplexGrid
from .operators import equivalent_af


class MaskError(Exception):
    """Raised for unachievable or out-of-tolerance acceleration targets."""


@dataclass
class MaskSpec:
    dims: tuple[int, int]
    target_af: float = 4.0
    center_size: tuple[int, int] = (24, 24)
    seed: int = 0
    af_tolerance: float = 0.05  # relative; grid snapping makes exact AF unattainable
    density_slope: float = 2.0  # radius growth rate with distance from center

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.center_size = tuple(int(c) for c in self.center_size)
        if self.target_af < 1:
            raise MaskError(f"target_af {self.target_af} < 1")
        if any(c > d for c, d in zip(self.center_size, self.dims)):
            raise MaskError(f"center {self.center_size} exceeds dims {self.dims}")


@dataclass
class SamplingMask:
    sampled: np.ndarray  # boolean grid, True = acquired
    center_size: tuple[int, int]
    achieved_af: float
    min_radius: float | None = None  # Poisson-disk min pairwise distance bound

    @property
    def dims(self) -> tuple[int, ...]:
        return self.sampled.shape

    def n_sampled(self) -> int:
        return int(self.sampled.sum())


def _center_block(dims, center_size) -> np.ndarray:
    m = np.zeros(dims, dtype=bool)
    sl = []
    for N, n in zip(dims, center_size):
        start = N // 2 - n // 2
        sl.append(slice(start, start + n))
    m[tuple(sl)] = True
    return m


def center_block_mask(dims, center_size) -> SamplingMask:
    """Only the centered calibration block is sampled."""
    dims = tuple(dims)
    m = _center_block(dims, tuple(center_size))
    af = float(equivalent_af(m, dims))
    return SamplingMask(m, tuple(center_size), af)


def _check_af_guard(spec: MaskSpec):
    total = int(np.prod(spec.dims))
    center = int(np.prod(spec.center_size))
    if center > 0 and spec.target_af > total / center:
        raise MaskError(
            f"target_af {spec.target_af} unachievable: center block alone gives "
            f"af {total / center:.2f}"
        )


def uniform_random_mask(spec: MaskSpec) -> SamplingMask:
    """Uniform random mask with exactly ceil(total/af) points incl. center."""
    _check_af_guard(spec)
    total = int(np.prod(spec.dims))
    n_target = math.ceil(total / spec.target_af)
    center = _center_block(spec.dims, spec.center_size)
    n_center = int(center.sum())
    if n_target < n_center:
        raise MaskError(
            f"target_af {spec.target_af} needs {n_target} points but center has {n_center}"
        )
    rng = np.random.default_rng(spec.seed)
    free = np.flatnonzero(~center.ravel())
    chosen = rng.choice(free, size=n_target - n_center, replace=False)
    m = center.copy()
    m.ravel()[chosen] = True
    return SamplingMask(m, spec.center_size, total / n_target)


def _poisson_fill(spec: MaskSpec, r0: float) -> np.ndarray:
    """Greedy dart throwing over a seeded permutation of grid cells.

    A candidate is accepted iff no previously accepted non-center point
    lies within r(d) = r0 * (1 + slope * d / d_max) of it, d being the
    candidate's distance from the k-space center. Accepted pairwise
    distances are therefore >= r0.
    """
    ny, nx = spec.dims
    cy, cx = ny // 2, nx // 2
    yy, xx = np.mgrid[0:ny, 0:nx]
    dist = np.hypot(yy - cy, xx - cx)
    d_max = float(dist.max()) or 1.0
    center = _center_block(spec.dims, spec.center_size)

    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(ny * nx)
    occ = np.zeros((ny, nx), dtype=bool)
    for flat in order:
        i, j = divmod(int(flat), nx)
        if center[i, j]:
            continue
        r = r0 * (1.0 + spec.density_slope * dist[i, j] / d_max)
        w = int(math.ceil(r))
        i0, i1 = max(0, i - w), min(ny, i + w + 1)
        j0, j1 = max(0, j - w), min(nx, j + w + 1)
        block = occ[i0:i1, j0:j1]
        if block.any():
            ii, jj = np.nonzero(block)
            if np.min(np.hypot(ii + i0 - i, jj + j0 - j)) < r:
                continue
        occ[i, j] = True
    return occ | center


def poisson_disk_mask(spec: MaskSpec) -> SamplingMask:
    """Variable-density Poisson-disk mask hitting target_af by bisection on r0."""
    _check_af_guard(spec)
    total = int(np.prod(spec.dims))
    if spec.target_af <= 1.0 + 1e-12:
        m = np.ones(spec.dims, dtype=bool)
        return SamplingMask(m, spec.center_size, 1.0, min_radius=0.0)

    n_target = total / spec.target_af

    # bracket: r0 -> accepted count is (noisily) decreasing in r0
    lo, hi = 0.0, 1.0
    while int(_poisson_fill(spec, hi).sum()) > n_target:
        lo, hi = hi, hi * 2.0
        if hi > max(spec.dims):
            break

    best = None
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        m = _poisson_fill(spec, mid)
        count = int(m.sum())
        af = total / count
        rel = abs(af - spec.target_af) / spec.target_af
        if best is None or rel < best[0]:
            best = (rel, mid, m, af)
        if rel <= spec.af_tolerance / 2:
            break
        if count > n_target:
            lo = mid
        else:
            hi = mid
    rel, r0, m, af = best
    if rel > spec.af_tolerance:
        raise MaskError(
            f"poisson mask missed target_af {spec.target_af}: achieved {af:.3f} "
            f"(rel err {rel:.3f} > tol {spec.af_tolerance})"
        )
    return SamplingMask(m, spec.center_size, af, min_radius=r0)


def mask_to_grid(mask: SamplingMask) -> ComplexGrid:
    return ComplexGrid(mask.sampled.astype(np.complex128), domain="kspace")


def grid_to_mask(g: ComplexGrid, center_size=(0, 0)) -> SamplingMask:
    sampled = np.real(g.data) > 0.5
    af = float(equivalent_af(sampled, sampled.shape))
    return SamplingMask(sampled, tuple(center_size), af)

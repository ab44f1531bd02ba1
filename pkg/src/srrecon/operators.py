"""Linear operator algebra of the imaging model y = M H F C x + b.

All transforms are centered (DC at index floor(N/2)) and unitary, so the
k-space truncation H is a pure centered crop and ||A|| <= 1 whenever the
sensitivity maps have unit root-sum-of-squares.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import GridError


def dft(x: np.ndarray, axes=None) -> np.ndarray:
    """Centered unitary DFT over ``axes`` (default: all axes)."""
    axes = tuple(range(x.ndim)) if axes is None else tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise GridError(f"invalid axis {ax} for ndim {x.ndim}")
    return np.fft.fftshift(
        np.fft.fftn(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"), axes=axes
    )


def idft(k: np.ndarray, axes=None) -> np.ndarray:
    """Inverse of :func:`dft`."""
    axes = tuple(range(k.ndim)) if axes is None else tuple(axes)
    for ax in axes:
        if not -k.ndim <= ax < k.ndim:
            raise GridError(f"invalid axis {ax} for ndim {k.ndim}")
    return np.fft.fftshift(
        np.fft.ifftn(np.fft.ifftshift(k, axes=axes), axes=axes, norm="ortho"), axes=axes
    )


def _center_slices(full_dims, crop_dims):
    # window [c - n//2, c - n//2 + n) with c = N//2, valid for odd and even N
    slices = []
    for N, n in zip(full_dims, crop_dims):
        start = N // 2 - n // 2
        slices.append(slice(start, start + n))
    return tuple(slices)


def crop_kspace(k: np.ndarray, lr_dims) -> np.ndarray:
    """H: keep the centered ``lr_dims`` block, discarding high frequencies.

    Only the trailing ``len(lr_dims)`` axes are cropped; leading axes
    (e.g. coil) pass through.
    """
    lr_dims = tuple(lr_dims)
    spatial = k.shape[k.ndim - len(lr_dims):]
    if any(n > N for n, N in zip(lr_dims, spatial)):
        raise GridError(f"crop dims {lr_dims} exceed grid dims {spatial}")
    lead = (slice(None),) * (k.ndim - len(lr_dims))
    return k[lead + _center_slices(spatial, lr_dims)].copy()


def zeropad_kspace(k: np.ndarray, hr_dims) -> np.ndarray:
    """H*: embed k at the center of an ``hr_dims`` grid of zeros."""
    hr_dims = tuple(hr_dims)
    spatial = k.shape[k.ndim - len(hr_dims):]
    if any(n < N for n, N in zip(hr_dims, spatial)):
        raise GridError(f"pad dims {hr_dims} smaller than grid dims {spatial}")
    lead_shape = k.shape[: k.ndim - len(hr_dims)]
    out = np.zeros(lead_shape + hr_dims, dtype=np.complex128)
    lead = (slice(None),) * len(lead_shape)
    out[lead + _center_slices(hr_dims, spatial)] = k
    return out


@dataclass
class SensitivitySet:
    """Per-coil complex sensitivity maps over the HR image grid.

    maps has shape [coil, *spatial]; root-sum-of-squares over coils is
    normalized to 1 inside the support.
    """

    maps: np.ndarray

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def spatial_dims(self) -> tuple[int, ...]:
        return self.maps.shape[1:]

    def rss(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=0))


def apply_sens(x: np.ndarray, sens: SensitivitySet) -> np.ndarray:
    """C: voxelwise multiply by each coil map -> coil-stacked images."""
    if x.shape != sens.spatial_dims:
        raise GridError(f"image dims {x.shape} != map dims {sens.spatial_dims}")
    return sens.maps * x[None, ...]


def combine_sens(multi: np.ndarray, sens: SensitivitySet) -> np.ndarray:
    """C*: sum conj(map) * coil-image over coils."""
    if multi.shape != sens.maps.shape:
        raise GridError(f"coil-image dims {multi.shape} != map dims {sens.maps.shape}")
    return np.sum(np.conj(sens.maps) * multi, axis=0)


@dataclass
class ForwardModel:
    """Immutable description of A = M H F C.

    mask lives on the LR k-space grid (True = sampled); sens lives on the
    HR image grid.
    """

    mask: np.ndarray
    lr_dims: tuple[int, ...]
    hr_dims: tuple[int, ...]
    sens: SensitivitySet

    def __post_init__(self):
        self.lr_dims = tuple(self.lr_dims)
        self.hr_dims = tuple(self.hr_dims)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.lr_dims:
            raise GridError(f"mask dims {self.mask.shape} != lr_dims {self.lr_dims}")
        if any(l > h for l, h in zip(self.lr_dims, self.hr_dims)):
            raise GridError(f"lr_dims {self.lr_dims} exceed hr_dims {self.hr_dims}")
        if self.sens.spatial_dims != self.hr_dims:
            raise GridError(
                f"sens spatial dims {self.sens.spatial_dims} != hr_dims {self.hr_dims}"
            )

    @property
    def spatial_axes(self):
        return tuple(range(1, 1 + len(self.hr_dims)))


def forward(model: ForwardModel, x: np.ndarray) -> np.ndarray:
    """A x: coil weighting, per-coil centered DFT, center crop, mask."""
    if x.shape != model.hr_dims:
        raise GridError(f"input dims {x.shape} != hr_dims {model.hr_dims}")
    coils = apply_sens(x, model.sens)
    k = dft(coils, axes=model.spatial_axes)
    k = crop_kspace(k, model.lr_dims)
    return k * model.mask[None, ...]


def adjoint(model: ForwardModel, y: np.ndarray) -> np.ndarray:
    """A* y: mask, zero-pad, per-coil inverse DFT, coil combine."""
    if y.shape != (model.sens.n_coils,) + model.lr_dims:
        raise GridError(
            f"data dims {y.shape} != {(model.sens.n_coils,) + model.lr_dims}"
        )
    k = y * model.mask[None, ...]
    k = zeropad_kspace(k, model.hr_dims)
    coils = idft(k, axes=model.spatial_axes)
    return combine_sens(coils, model.sens)


def normal(model: ForwardModel, x: np.ndarray) -> np.ndarray:
    """A* A x."""
    return adjoint(model, forward(model, x))


def data_fidelity_grad(model: ForwardModel, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of (1/2)||A s - y||^2, i.e. A*(A s - y)."""
    return adjoint(model, forward(model, s) - y)


def data_fidelity(model: ForwardModel, x: np.ndarray, y: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(forward(model, x) - y) ** 2))


def operator_norm(model: ForwardModel, n_iter: int = 30, seed: int = 0) -> float:
    """Power-iteration estimate of ||A|| = sqrt(lambda_max(A*A))."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(model.hr_dims) + 1j * rng.standard_normal(model.hr_dims)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        z = normal(model, x)
        lam = float(np.real(np.vdot(x, z)))
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        x = z / nz
    return float(np.sqrt(max(lam, 0.0)))


def equivalent_af(mask: np.ndarray, target_dims) -> Fraction:
    """Equivalent acceleration factor: target voxel count / sampled points."""
    mask = np.asarray(mask, dtype=bool)
    n_sampled = int(mask.sum())
    if n_sampled == 0:
        raise GridError("mask has zero sampled points")
    return Fraction(int(np.prod(tuple(target_dims))), n_sampled)

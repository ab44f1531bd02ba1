"""Complex n-dimensional grids and their on-disk format.

A grid is the universal signal carrier: images, k-space data, coil
sensitivity maps and sampling masks (0/1 in the real part) all travel
through the same ``.hdr``/``.dat`` file pair.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

MAGIC = "SRRGRID/1"

_PRECISIONS = {"c64": np.complex64, "c128": np.complex128}
_PRECISION_NAMES = {np.dtype(np.complex64): "c64", np.dtype(np.complex128): "c128"}


class GridError(Exception):
    """Raised on malformed grid files or incompatible grid operands."""


@dataclass
class ComplexGrid:
    """An n-dimensional array of complex samples plus a domain tag."""

    data: np.ndarray
    domain: str = "image"  # "image" or "kspace"; metadata only

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if not np.iscomplexobj(self.data):
            self.data = self.data.astype(np.complex128)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def copy(self) -> "ComplexGrid":
        return ComplexGrid(self.data.copy(), self.domain)


def _as_array(g) -> np.ndarray:
    return g.data if isinstance(g, ComplexGrid) else np.asarray(g)


def inner_product(a, b) -> complex:
    """<a, b> = sum(conj(a_i) * b_i) over all samples."""
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise GridError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return complex(np.vdot(av, bv))


def write_grid(path: str, g: ComplexGrid, precision: str = "c128") -> None:
    """Write ``path.hdr`` / ``path.dat``; round-trips bit-exactly."""
    if precision not in _PRECISIONS:
        raise GridError(f"unsupported precision {precision!r}")
    data = _as_array(g)
    domain = g.domain if isinstance(g, ComplexGrid) else "image"
    dims = " ".join(str(d) for d in data.shape)
    with open(path + ".hdr", "w", encoding="utf-8") as f:
        f.write(f"{MAGIC}\n{dims}\n{precision}\n{domain}\n")
    raw = np.ascontiguousarray(data.astype(_PRECISIONS[precision]))
    # interleaved (real, imag) little-endian, row-major
    raw.astype("<c8" if precision == "c64" else "<c16").tofile(path + ".dat")


def read_grid(path: str) -> ComplexGrid:
    """Read a grid written by :func:`write_grid`."""
    with open(path + ".hdr", "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if len(lines) < 4 or lines[0] != MAGIC:
        raise GridError(f"{path}.hdr: bad magic or truncated header")
    try:
        dims = tuple(int(t) for t in lines[1].split())
    except ValueError as e:
        raise GridError(f"{path}.hdr: bad dims line") from e
    if any(d <= 0 for d in dims) or not dims:
        raise GridError(f"{path}.hdr: non-positive dims {dims}")
    precision = lines[2]
    if precision not in _PRECISIONS:
        raise GridError(f"{path}.hdr: unsupported precision byte {precision!r}")
    domain = lines[3]
    itemsize = 8 if precision == "c64" else 16
    expected = int(np.prod(dims)) * itemsize
    actual = os.path.getsize(path + ".dat")
    if actual != expected:
        raise GridError(
            f"{path}.dat: length mismatch, header implies {expected} bytes, file has {actual}"
        )
    data = np.fromfile(path + ".dat", dtype="<c8" if precision == "c64" else "<c16")
    return ComplexGrid(data.reshape(dims), domain)

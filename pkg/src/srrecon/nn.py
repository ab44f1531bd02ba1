"""Neural building blocks on top of the autodiff tape.

Convolutions are assembled from the linear gather/scatter/matmul
primitives (pad -> im2col -> matmul), so they inherit exact first- and
second-order gradients from the tape. The same code path handles 2D and
3D kernels.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    add,
    broadcast_to,
    matmul,
    mul,
    reshape,
    scatter,
    sumt,
    take,
    tensor,
)

_INDEX_CACHE: dict = {}


def _conv_indices(in_shape, kdims):
    """(pad gather idx, padded size, im2col idx) for shape (C, *spatial)."""
    key = (tuple(in_shape), tuple(kdims))
    cached = _INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    C, *S = in_shape
    pads = [k // 2 for k in kdims]
    Sp = [s + 2 * p for s, p in zip(S, pads)]
    padded_size = C * int(np.prod(Sp))

    grids = np.meshgrid(
        np.arange(C), *[np.arange(s) + p for s, p in zip(S, pads)], indexing="ij"
    )
    idx_pad = np.ravel_multi_index(tuple(grids), (C, *Sp)).astype(np.int64)

    pos = np.stack(
        np.meshgrid(*[np.arange(s) for s in S], indexing="ij"), 0
    ).reshape(len(S), -1)  # (d, N)
    off = np.stack(
        np.meshgrid(*[np.arange(k) for k in kdims], indexing="ij"), 0
    ).reshape(len(S), -1)  # (d, K)
    coords = pos[:, None, :] + off[:, :, None]  # (d, K, N)
    strides = np.ones(len(S), dtype=np.int64)
    for i in range(len(S) - 2, -1, -1):
        strides[i] = strides[i + 1] * Sp[i + 1]
    flat = np.tensordot(strides, coords, axes=(0, 0))  # (K, N)
    chan = np.arange(C, dtype=np.int64)[:, None, None] * int(np.prod(Sp))
    idx_cols = (chan + flat[None]).reshape(C * flat.shape[0], flat.shape[1])

    result = (idx_pad, padded_size, idx_cols)
    _INDEX_CACHE[key] = result
    return result


def conv(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded stride-1 cross-correlation.

    x: (Cin, *spatial); w: (Cout, Cin, *k) with odd k; b: (Cout,).
    Output: (Cout, *spatial).
    """
    Cin, *S = x.value.shape
    Cout, Cin_w, *kdims = w.value.shape
    if Cin != Cin_w:
        raise ValueError(f"channel mismatch: input {Cin}, kernel {Cin_w}")
    if len(kdims) != len(S):
        raise ValueError(f"kernel rank {len(kdims)} != spatial rank {len(S)}")
    idx_pad, padded_size, idx_cols = _conv_indices((Cin, *S), kdims)
    padded = scatter(reshape(x, (x.value.size,)), idx_pad.ravel(), padded_size)
    cols = take(padded, idx_cols)  # (Cin*K, N)
    wmat = reshape(w, (Cout, Cin * int(np.prod(kdims))))
    y = matmul(wmat, cols)
    y = add(y, broadcast_to(reshape(b, (Cout, 1)), y.value.shape))
    return reshape(y, (Cout, *S))


def avg_pool(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping 2D window means; pads to divisible, padding zeros
    excluded from the averages."""
    if factor == 1:
        return x
    C, H, W = x.value.shape
    Hp = -(-H // factor) * factor
    Wp = -(-W // factor) * factor
    if (Hp, Wp) != (H, W):
        grids = np.meshgrid(np.arange(C), np.arange(H), np.arange(W), indexing="ij")
        idx = np.ravel_multi_index(tuple(grids), (C, Hp, Wp)).astype(np.int64)
        x = reshape(scatter(reshape(x, (x.value.size,)), idx.ravel(), C * Hp * Wp), (C, Hp, Wp))
        ones = np.zeros((Hp, Wp))
        ones[:H, :W] = 1.0
    else:
        ones = np.ones((H, W))
    Ho, Wo = Hp // factor, Wp // factor
    counts = ones.reshape(Ho, factor, Wo, factor).sum(axis=(1, 3))
    pooled = sumt(reshape(x, (C, Ho, factor, Wo, factor)), axis=(2, 4))
    return mul(pooled, Tensor(1.0 / counts[None]))


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer: w @ x + b for flat x."""
    n = x.value.size
    m = w.value.shape[0]
    y = matmul(w, reshape(x, (n, 1)))
    return add(reshape(y, (m,)), b)


def he_init(rng: np.random.Generator, shape, fan_in: int, scale: float = 1.0):
    """Kernel init scaled by fan-in."""
    return scale * np.sqrt(2.0 / fan_in) * rng.standard_normal(shape)


class Params(dict):
    """Ordered name -> parameter Tensor container."""

    def add_param(self, name: str, value) -> Tensor:
        from .autodiff import parameter

        t = parameter(value)
        self[name] = t
        return t

    def tensors(self):
        return list(self.values())

    def names(self):
        return list(self.keys())

    def count(self) -> int:
        return int(sum(t.value.size for t in self.values()))

    def values_dict(self) -> dict:
        return {k: t.value.copy() for k, t in self.items()}

    def load_values(self, values: dict) -> None:
        for k, t in self.items():
            if k not in values:
                raise KeyError(f"missing parameter {k!r} in checkpoint")
            if values[k].shape != t.value.shape:
                raise ValueError(
                    f"parameter {k!r}: shape {values[k].shape} != {t.value.shape}"
                )
            t.value = values[k].astype(np.float64).copy()

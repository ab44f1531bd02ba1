"""Tape-based reverse-mode automatic differentiation with second-order
support.

Every primitive's backward rule is itself expressed through primitives,
so gradients produced with ``create_graph=True`` are differentiable
again — the double-backward needed by the discriminator's gradient
penalty comes for free. All values are real float64 arrays; complex
images travel as two channels (see :func:`to_channels`).
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


class Tensor:
    """A node in the autodiff graph: a float64 array plus parent edges."""

    __slots__ = ("value", "parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents  # tuple of (parent Tensor, vjp closure)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def _node(value, parents) -> Tensor:
    if _GRAD_ENABLED[-1]:
        keep = tuple((p, fn) for p, fn in parents if p.requires_grad)
        if keep:
            return Tensor(value, keep, True)
    return Tensor(value)


def _reduce_to(g: Tensor, shape) -> Tensor:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.value.shape == shape:
        return g
    nd, gnd = len(shape), g.value.ndim
    if gnd > nd:
        g = sumt(g, axis=tuple(range(gnd - nd)))
    ax = tuple(i for i in range(nd) if shape[i] == 1 and g.value.shape[i] != 1)
    if ax:
        g = sumt(g, axis=ax, keepdims=True)
    if g.value.shape != shape:
        g = reshape(g, shape)
    return g


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _node(
        a.value + b.value,
        (
            (a, lambda g: _reduce_to(g, a.value.shape)),
            (b, lambda g: _reduce_to(g, b.value.shape)),
        ),
    )


def neg(a) -> Tensor:
    a = tensor(a)
    return _node(-a.value, ((a, lambda g: neg(g)),))


def sub(a, b) -> Tensor:
    return add(a, neg(b))


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _node(
        a.value * b.value,
        (
            (a, lambda g: _reduce_to(mul(g, b), a.value.shape)),
            (b, lambda g: _reduce_to(mul(g, a), b.value.shape)),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return _node(
        a.value @ b.value,
        (
            (a, lambda g: matmul(g, transpose2(b))),
            (b, lambda g: matmul(transpose2(a), g)),
        ),
    )


def transpose2(a) -> Tensor:
    a = tensor(a)
    return _node(a.value.T.copy(), ((a, lambda g: transpose2(g)),))


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), ((a, lambda g: reshape(g, old)),))


def sumt(a, axis=None, keepdims=False) -> Tensor:
    a = tensor(a)
    shape = a.value.shape

    def vjp(g):
        if axis is None:
            kept = (1,) * len(shape)
        elif keepdims:
            kept = g.value.shape
        else:
            ax = axis if isinstance(axis, tuple) else (axis,)
            ax = tuple(i % len(shape) for i in ax)
            kept = tuple(1 if i in ax else shape[i] for i in range(len(shape)))
        return broadcast_to(reshape(g, kept), shape)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), ((a, vjp),))


def broadcast_to(a, shape) -> Tensor:
    a = tensor(a)
    old = a.value.shape
    return _node(
        np.broadcast_to(a.value, shape).copy(), ((a, lambda g: _reduce_to(g, old)),)
    )


def power(a, p: float) -> Tensor:
    a = tensor(a)

    def vjp(g):
        return mul(mul(g, Tensor(np.float64(p))), power(a, p - 1.0))

    return _node(np.power(a.value, p), ((a, vjp),))


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def take(a, idx: np.ndarray) -> Tensor:
    """Gather on the flattened array; linear, adjoint of :func:`scatter`."""
    a = tensor(a)
    size = a.value.size
    shape = a.value.shape
    return _node(
        a.value.ravel()[idx],
        ((a, lambda g: reshape(scatter(g, idx, size), shape)),),
    )


def scatter(a, idx: np.ndarray, size: int) -> Tensor:
    """Scatter-add ``a`` into a flat zero array of length ``size``.

    idx must have a's shape; duplicate indices accumulate.
    """
    a = tensor(a)
    shape = a.value.shape
    out = np.bincount(idx.ravel(), weights=a.value.ravel(), minlength=size)
    return _node(out, ((a, lambda g: reshape(take(g, idx), shape)),))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = tensor(a)
    if not 0.0 < slope < 1.0:
        raise ValueError("slope must be in (0, 1)")
    # subgradient at 0 uses the positive branch
    m = np.where(a.value >= 0.0, 1.0, slope)
    return _node(a.value * m, ((a, lambda g: mul(g, Tensor(m))),))


def linear_selfadjoint(a, fn) -> Tensor:
    """Custom primitive for a linear, self-adjoint real map ``fn``.

    The backward rule applies ``fn`` itself, which is exact whenever fn
    is its own adjoint under the real inner product (e.g. the normal
    operator A*A viewed on stacked real/imag channels).
    """
    a = tensor(a)
    return _node(np.asarray(fn(a.value), dtype=np.float64), ((a, lambda g: linear_selfadjoint(g, fn)),))


# ---------------------------------------------------------------------------
# conveniences built from primitives


def mean(a, axis=None) -> Tensor:
    a = tensor(a)
    n = a.value.size if axis is None else np.prod(
        [a.value.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(sumt(a, axis=axis), Tensor(np.float64(1.0 / n)))


def square(a) -> Tensor:
    a = tensor(a)
    return mul(a, a)


def sum_squares(a) -> Tensor:
    return sumt(square(a))


def l2_norm(a) -> Tensor:
    return sqrt(sum_squares(a))


def mse(a, b) -> Tensor:
    return mean(square(sub(a, b)))


def concat_flat(tensors) -> Tensor:
    """Concatenate flattened tensors into one 1D tensor."""
    sizes = [t.value.size for t in tensors]
    total = int(sum(sizes))
    out = None
    off = 0
    for t, n in zip(tensors, sizes):
        idx = np.arange(off, off + n)
        piece = scatter(reshape(t, (n,)), idx, total)
        out = piece if out is None else add(out, piece)
        off += n
    return out


# ---------------------------------------------------------------------------
# backward


def _toposort(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before children


def grad(out: Tensor, inputs, create_graph: bool = False):
    """Gradients of a scalar ``out`` w.r.t. ``inputs``.

    With create_graph=True the returned gradients are themselves taped,
    enabling gradients of gradients.
    """
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    if out.value.size != 1:
        raise ValueError(f"grad root must be scalar, got shape {out.value.shape}")
    order = _toposort(out)
    gm = {id(out): Tensor(np.ones_like(out.value))}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = gm.get(id(node))
            if g is None:
                continue
            for p, fn in node.parents:
                contrib = fn(g)
                prev = gm.get(id(p))
                gm[id(p)] = contrib if prev is None else add(prev, contrib)
    result = [
        gm.get(id(i)) or Tensor(np.zeros_like(i.value)) for i in inputs
    ]
    return result[0] if single else result


# ---------------------------------------------------------------------------
# complex <-> channel codec


def to_channels(z: np.ndarray) -> np.ndarray:
    """Complex array -> real array with a leading (real, imag) axis."""
    return np.stack([np.real(z), np.imag(z)]).astype(np.float64)


def to_complex(ch: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_channels`."""
    return ch[0] + 1j * ch[1]

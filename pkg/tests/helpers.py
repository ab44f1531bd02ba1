"""Shared test utilities: random complex grids, brute-force oracles, and
finite-difference gradient checks."""

import numpy as np


def rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def brute_force_dft2(x):
    """O(N^2) centered unitary 2D DFT, written independently of the FFT path."""
    ny, nx = x.shape
    cy, cx = ny // 2, nx // 2
    out = np.zeros((ny, nx), dtype=np.complex128)
    for k in range(ny):
        for l in range(nx):
            acc = 0.0 + 0.0j
            for n in range(ny):
                for m in range(nx):
                    phase = -2j * np.pi * ((k - cy) * (n - cy) / ny + (l - cx) * (m - cx) / nx)
                    acc += x[n, m] * np.exp(phase)
            out[k, l] = acc / np.sqrt(ny * nx)
    return out


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-300)
    return np.linalg.norm((a - b).ravel()) / denom


def fd_gradient_check(f, params, rng, h=1e-5, n_samples=5, skip_pred=None):
    """Compare autodiff gradients of scalar f() against central differences.

    params: list of (name, Tensor); checks up to n_samples entries per
    tensor (all entries when the tensor is scalar or n_samples >= size).
    Returns the worst relative error seen.
    """
    from srrecon import autodiff as ad

    out = f()
    grads = ad.grad(out, [t for _, t in params])
    worst = 0.0
    for (name, t), g in zip(params, grads):
        flat = t.value.ravel()
        if flat.size <= n_samples:
            idxs = np.arange(flat.size)
        else:
            idxs = rng.choice(flat.size, size=n_samples, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            an = g.value.ravel()[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            if skip_pred is not None and skip_pred(name, i):
                continue
            worst = max(worst, rel)
    return worst


def adjoint_dot_test(op, op_adj, in_shape, out_shape, rng, n_trials=20):
    """Randomized <op(x), y> == <x, op_adj(y)> check; returns worst rel err."""
    worst = 0.0
    for _ in range(n_trials):
        x = rand_complex(rng, in_shape)
        y = rand_complex(rng, out_shape)
        lhs = np.vdot(y, op(x))
        rhs = np.vdot(op_adj(y), x)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst

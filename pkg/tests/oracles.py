"""Slow reference implementations used as test oracles."""

import itertools

import numpy as np


def best_subset_error(y, D, max_atoms):
    """Smallest least-squares residual energy over every support of size <= max_atoms."""
    best = float(y @ y)
    for k in range(1, max_atoms + 1):
        for S in itertools.combinations(range(D.shape[1]), k):
            sub = D[:, S]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            r = y - sub @ coef
            best = min(best, float(r @ r))
    return best


def grid_argmin(x, t1, t2, rho, step=1e-4):
    """Grid search for argmin_z 0.5 (z - x)^2 + t1 |z| + t2 |z - rho| over a bracket containing the minimizer."""
    lo = min(x, 0.0, rho) - 1.0
    hi = max(x, 0.0, rho) + 1.0
    z = np.arange(lo, hi + step, step)
    obj = 0.5 * (z - x) ** 2 + t1 * np.abs(z) + t2 * np.abs(z - rho)
    return z[np.argmin(obj)]


def scalar_prox(x, t1, t2, rho):
    """Exact argmin of the scalar double-l1 objective by comparing its candidate points."""
    cands = [0.0, rho]
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            cands.append(x - t1 * s1 - t2 * s2)
    cands = np.array(cands)
    obj = 0.5 * (cands - x) ** 2 + t1 * np.abs(cands) + t2 * np.abs(cands - rho)
    return cands[np.argmin(obj)]


def coordinate_descent_double_l1(r, D, prev, theta1, theta2, sweeps=3000):
    """Cyclic coordinate descent with exact scalar steps on the patch double-l1 objective."""
    a = prev.astype(float).copy()
    norms = np.sum(D * D, axis=0)
    res = r - D @ a
    for _ in range(sweeps):
        for j in range(D.shape[1]):
            res += D[:, j] * a[j]
            x = D[:, j] @ res / norms[j]
            a[j] = scalar_prox(x, theta1 / norms[j], theta2 / norms[j], prev[j])
            res -= D[:, j] * a[j]
    return a


def planted_dictionary(seed, atom_dim=16, atom_count=32, samples=1500, sparsity=2):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((atom_dim, atom_count))
    D /= np.linalg.norm(D, axis=0)
    X = np.zeros((atom_count, samples))
    for j in range(samples):
        idx = rng.choice(atom_count, sparsity, replace=False)
        X[idx, j] = rng.standard_normal(sparsity)
    P = D @ X
    init = P[:, rng.choice(samples, atom_count, replace=False)]
    return D, P, init / np.linalg.norm(init, axis=0)


def dense_phi(phi, shape):
    """Global block-diagonal sensing matrix acting on row-major flattened frames."""
    rows, cols = shape
    B = phi.block_side
    n = rows * cols
    out = np.zeros(((rows // B) * (cols // B) * phi.m_b, n))
    k = 0
    for bi in range(rows // B):
        for bj in range(cols // B):
            for c in range(B):
                for r in range(B):
                    col = (bi * B + r) * cols + bj * B + c
                    out[k * phi.m_b:(k + 1) * phi.m_b, col] = phi.entries[:, c * B + r]
            k += 1
    return out

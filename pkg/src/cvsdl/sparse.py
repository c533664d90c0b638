"""Dictionaries and greedy sparse coding.

A dictionary is a ``(atom_dim, t)`` float array with unit-norm columns.
A code set is a dense ``(t, J)`` coefficient matrix whose column ``l``
holds the code of patch ``l``; :func:`code_support` gives the index/value
view of one code.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "init_dictionary",
    "normalize_atoms",
    "check_dictionary",
    "omp",
    "sparse_code_all",
    "code_support",
    "fit_residual",
    "save_dictionary",
    "load_dictionary",
]

_CVSD_MAGIC = b"CVSD1"


ROUNDOFF = 1e-24


def normalize_atoms(D, codes=None):
    """Scale columns of ``D`` to unit norm; rescale code rows so ``D @ codes`` is kept."""
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise ValueError("dictionary has a zero column")
    D = D / norms
    if codes is None:
        return D
    return D, codes * norms[:, None]


def check_dictionary(D, atol=1e-10):
    D = np.asarray(D)
    if D.ndim != 2:
        raise ValueError("dictionary must be a 2-D array")
    if not np.all(np.isfinite(D)):
        raise ValueError("dictionary contains non-finite entries")
    norms = np.linalg.norm(D, axis=0)
    if np.any(np.abs(norms - 1.0) > atol):
        raise ValueError("dictionary atoms are not unit norm")
    return D


def _dct_1d(size, count):
    n = np.arange(size)[:, None]
    k = np.arange(count)[None, :]
    return np.cos(np.pi * (n + 0.5) * k / count)


def init_dictionary(atom_dim, atom_count, kind="overcomplete-dct", seed=0):
    """Starting dictionary for learning.

    ``overcomplete-dct`` builds the separable 2-D DCT-II frame
    ``kron(A, A)`` with ``sqrt(atom_count)`` 1-D frequencies over
    ``sqrt(atom_dim)`` samples.  With ``atom_count == atom_dim`` this is
    the orthonormal 2-D DCT basis.  ``seeded-random`` draws Gaussian
    columns from ``default_rng(seed)``.
    """
    if atom_dim < 1 or atom_count < 1:
        raise ValueError("dictionary dimensions must be positive")
    if kind == "overcomplete-dct":
        p = int(round(np.sqrt(atom_dim)))
        q = int(round(np.sqrt(atom_count)))
        if p * p != atom_dim or q * q != atom_count:
            raise ValueError("overcomplete DCT needs square atom_dim and atom_count")
        if atom_count < atom_dim:
            raise ValueError("overcomplete DCT needs atom_count >= atom_dim")
        A = _dct_1d(p, q)
        A /= np.linalg.norm(A, axis=0)
        return normalize_atoms(np.kron(A, A))
    if kind == "seeded-random":
        rng = np.random.default_rng(seed)
        return normalize_atoms(rng.standard_normal((atom_dim, atom_count)))
    raise ValueError(f"unknown dictionary kind {kind!r}")


def omp(y, D, sparsity_cap, error_threshold=0.0):
    """Orthogonal matching pursuit for one signal.

    Selects atoms by largest absolute correlation with the residual (ties
    go to the lowest index) and re-fits all active coefficients by least
    squares after each pick.  Stops once ``||y - D a||^2 <= error_threshold``
    or ``sparsity_cap`` atoms are active.

    Returns the length-``t`` coefficient vector.
    """
    y = np.asarray(y, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("omp input contains non-finite values")
    if np.any(np.linalg.norm(D, axis=0) == 0):
        raise ValueError("dictionary has a zero column")
    n, t = D.shape
    if y.shape != (n,):
        raise ValueError(f"signal length {y.shape} does not match atom dimension {n}")
    cap = min(int(sparsity_cap), n, t)
    alpha = np.zeros(t)
    residual = y.copy()
    support = []
    # Q holds an orthonormal basis of the selected atoms (Gram-Schmidt QR update)
    Q = np.zeros((n, cap))
    R = np.zeros((cap, cap))
    # a residual at round-off level counts as an exact fit
    stop = max(error_threshold, ROUNDOFF * float(y @ y))
    while len(support) < cap and residual @ residual > stop:
        corr = np.abs(D.T @ residual)
        corr[support] = -1.0
        k = int(np.argmax(corr))
        s = len(support)
        d = D[:, k]
        proj = Q[:, :s].T @ d
        q = d - Q[:, :s] @ proj
        # re-orthogonalize once for stability
        extra = Q[:, :s].T @ q
        q -= Q[:, :s] @ extra
        proj += extra
        nq = np.linalg.norm(q)
        if nq <= 1e-12 * np.linalg.norm(d):
            break  # atom already in span of the support
        Q[:, s] = q / nq
        R[:s, s] = proj
        R[s, s] = nq
        support.append(k)
        residual = residual - Q[:, s] * (Q[:, s] @ residual)
    if support:
        s = len(support)
        coef = np.linalg.solve(R[:s, :s], Q[:, :s].T @ y)
        alpha[support] = coef
    return alpha


def sparse_code_all(Y, D, sparsity_cap, error_threshold=0.0):
    """OMP on every column of ``Y`` at once; returns the ``(t, J)`` code matrix.

    Same selection and stopping rules as :func:`omp`, vectorized over
    signals with per-signal Gram-Schmidt bases.
    """
    Y = np.asarray(Y, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    n, t = D.shape
    if Y.ndim != 2 or Y.shape[0] != n:
        raise ValueError(f"signal matrix {Y.shape} does not match atom dimension {n}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("omp input contains non-finite values")
    J = Y.shape[1]
    codes = np.zeros((t, J))
    if J == 0:
        return codes
    cap = min(int(sparsity_cap), n, t)
    Q = np.zeros((J, n, cap))
    R = np.zeros((J, cap, cap))
    support = np.zeros((J, cap), dtype=np.intp)
    count = np.zeros(J, dtype=np.intp)
    residual = Y.T.copy()  # (J, n)
    stop = np.maximum(error_threshold, ROUNDOFF * np.einsum("ij,ij->i", residual, residual))
    active = np.einsum("ij,ij->i", residual, residual) > stop
    used = np.zeros((J, t), dtype=bool)
    for s in range(cap):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        corr = np.abs(residual[idx] @ D)
        corr[used[idx]] = -1.0
        k = np.argmax(corr, axis=1)
        d = D[:, k].T  # (a, n)
        Qa = Q[idx, :, :s]
        proj = np.einsum("ans,an->as", Qa, d)
        q = d - np.einsum("ans,as->an", Qa, proj)
        extra = np.einsum("ans,an->as", Qa, q)
        q -= np.einsum("ans,as->an", Qa, extra)
        proj += extra
        nq = np.linalg.norm(q, axis=1)
        ok = nq > 1e-12 * np.linalg.norm(d, axis=1)
        # signals whose pick is degenerate stop here
        active[idx[~ok]] = False
        idx, k, q, nq, proj = idx[ok], k[ok], q[ok], nq[ok], proj[ok]
        q /= nq[:, None]
        Q[idx, :, s] = q
        R[idx, :s, s] = proj
        R[idx, s, s] = nq
        support[idx, s] = k
        used[idx, k] = True
        count[idx] = s + 1
        residual[idx] -= q * np.einsum("an,an->a", q, residual[idx])[:, None]
        still = np.einsum("an,an->a", residual[idx], residual[idx]) > stop[idx]
        active[idx[~still]] = False
    for s in range(1, cap + 1):
        idx = np.flatnonzero(count == s)
        if idx.size == 0:
            continue
        rhs = np.einsum("ans,an->as", Q[idx, :, :s], Y[:, idx].T)
        coef = np.linalg.solve(R[idx, :s, :s], rhs[..., None])[..., 0]
        codes[support[idx, :s], idx[:, None]] = coef
    return codes


def code_support(codes, l):
    """Index/value pairs of code ``l`` with strictly increasing indices."""
    col = np.asarray(codes)[:, l]
    idx = np.flatnonzero(col)
    return idx, col[idx]


def fit_residual(P, D, codes) -> float:
    """Sum of squared patch approximation errors ``sum_l ||p_l - D a_l||^2``."""
    E = P - D @ codes
    return float(np.sum(E * E))


def save_dictionary(D, path) -> None:
    D = np.asarray(D, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_CVSD_MAGIC)
        fh.write(struct.pack("<II", *D.shape))
        fh.write(np.ascontiguousarray(D).tobytes(order="C"))


def load_dictionary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(_CVSD_MAGIC):
        raise ValueError("not a CVSD1 dictionary file")
    off = len(_CVSD_MAGIC)
    if len(buf) < off + 8:
        raise ValueError(f"truncated dictionary header at byte {off}")
    rows, cols = struct.unpack_from("<II", buf, off)
    off += 8
    need = rows * cols * 8
    if len(buf) - off != need:
        raise ValueError(f"dictionary payload size mismatch at byte {off}")
    return np.frombuffer(buf, dtype="<f8", offset=off).reshape(rows, cols).astype(np.float64)

"""Dictionary update rules (MOD, K-SVD, MDU) and the alternating learner.

Every update takes the training patches ``P`` (``(n, J')``), the current
codes ``X`` (``(t, J')``) and dictionary ``D`` and returns a new
``(D, X)`` pair with unit-norm atoms and ``||P - D X||_F`` not larger than
before the call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import normalize_atoms, sparse_code_all

__all__ = [
    "LearnConfig",
    "dict_update_mod",
    "dict_update_ksvd",
    "dict_update_mdu",
    "learn_dictionary",
    "UPDATE_METHODS",
]


@dataclass(frozen=True)
class LearnConfig:
    """Dictionary learning knobs.

    ``sparsity_cap`` bounds the number of atoms per training code and
    ``error_threshold`` is the per-patch squared-error budget of OMP.
    ``mdu_group_size`` only matters for ``method="mdu"``.
    """

    method: str = "ksvd"
    iterations: int = 20
    sparsity_cap: int = 8
    error_threshold: float = 0.0
    mdu_group_size: int = 4

    def __post_init__(self):
        if self.method not in UPDATE_METHODS:
            raise ValueError(f"unknown dictionary method {self.method!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.sparsity_cap < 1:
            raise ValueError("sparsity_cap must be >= 1")
        if self.error_threshold < 0:
            raise ValueError("error_threshold must be nonnegative")
        if self.mdu_group_size < 1:
            raise ValueError("mdu_group_size must be >= 1")


class _Replacer:
    """Hands out the worst-approximated training patches, each at most once."""

    def __init__(self, P, E):
        self.P = P
        self.err = np.einsum("ij,ij->j", E, E)
        self.norms = np.linalg.norm(P, axis=0)
        self.err[self.norms == 0] = -1.0

    def take(self):
        j = int(np.argmax(self.err))  # first index wins ties
        if self.err[j] < 0:
            return None
        self.err[j] = -1.0
        return self.P[:, j] / self.norms[j]


def _rank_one(Ek):
    U, S, Vt = np.linalg.svd(Ek, full_matrices=False)
    return U[:, 0], S[0] * Vt[0]


def dict_update_mod(P, codes, D, ridge=1e-8):
    """Method of optimal directions: refit all atoms by least squares.

    Solves ``D = P X^T (X X^T + eps I)^{-1}`` with ``eps = ridge * tr(X X^T) / t``,
    keeps (or replaces) atoms whose code row is empty, then renormalizes
    atoms and rescales the codes accordingly.
    """
    P = np.asarray(P, dtype=np.float64)
    X = np.array(codes, dtype=np.float64)
    D_old = np.asarray(D, dtype=np.float64)
    t = D_old.shape[1]
    G = X @ X.T
    eps = ridge * np.trace(G) / t
    if eps == 0:
        eps = ridge
    D_new = np.linalg.solve(G + eps * np.eye(t), X @ P.T).T
    unused = ~np.any(X != 0, axis=1)
    D_new[:, unused] = D_old[:, unused]
    if np.any(unused):
        rep = _Replacer(P, P - D_new @ X)
        for k in np.flatnonzero(unused):
            atom = rep.take()
            if atom is not None:
                D_new[:, k] = atom
    tiny = np.linalg.norm(D_new, axis=0) < 1e-12
    D_new[:, tiny] = D_old[:, tiny]
    X[tiny] = 0.0
    return normalize_atoms(D_new, X)


def dict_update_ksvd(P, codes, D):
    """One K-SVD sweep: rank-one SVD refit of each atom and its code row in index order."""
    P = np.asarray(P, dtype=np.float64)
    X = np.array(codes, dtype=np.float64)
    D = np.array(D, dtype=np.float64)
    E = P - D @ X
    rep = None
    for k in range(D.shape[1]):
        users = np.flatnonzero(X[k])
        if users.size == 0:
            if rep is None:
                rep = _Replacer(P, E)
            atom = rep.take()
            if atom is not None:
                D[:, k] = atom
            continue
        Ek = E[:, users] + np.outer(D[:, k], X[k, users])
        D[:, k], X[k, users] = _rank_one(Ek)
        E[:, users] = Ek - np.outer(D[:, k], X[k, users])
    return D, X


def _refit_codes(Dg, Eg, mask):
    """Least-squares codes for each column of ``Eg`` on its fixed support ``mask[:, j]``."""
    Xg = np.zeros(mask.shape)
    keys = np.packbits(mask, axis=0, bitorder="little")
    patterns, inverse = np.unique(keys, axis=1, return_inverse=True)
    inverse = np.ravel(inverse)
    for p in range(patterns.shape[1]):
        cols = np.flatnonzero(inverse == p)
        rows = np.flatnonzero(mask[:, cols[0]])
        if rows.size == 0:
            continue
        coef, *_ = np.linalg.lstsq(Dg[:, rows], Eg[:, cols], rcond=None)
        Xg[np.ix_(rows, cols)] = coef
    return Xg


def dict_update_mdu(P, codes, D, group_size=4, alternations=2):
    """Multiple-atom update over contiguous groups of ``group_size`` atoms.

    For each group the atoms and their nonzero coefficients are refit
    jointly against the residual that excludes the group, by alternating
    least squares (atoms given codes, then codes on their fixed supports).
    Singleton groups use the exact rank-one SVD solution, as in K-SVD.
    This group-alternating rule is our reading of the multiple dictionary
    update idea; the original algorithm leaves these details open.
    """
    P = np.asarray(P, dtype=np.float64)
    X = np.array(codes, dtype=np.float64)
    D = np.array(D, dtype=np.float64)
    t = D.shape[1]
    if not 1 <= group_size <= t:
        raise ValueError(f"group_size must lie in [1, {t}]")
    E = P - D @ X
    rep = None
    for g0 in range(0, t, group_size):
        group = np.arange(g0, min(g0 + group_size, t))
        used = np.any(X[group] != 0, axis=1)
        for k in group[~used]:
            if rep is None:
                rep = _Replacer(P, E)
            atom = rep.take()
            if atom is not None:
                D[:, k] = atom
        group = group[used]
        if group.size == 0:
            continue
        users = np.flatnonzero(np.any(X[group] != 0, axis=0))
        Eg = E[:, users] + D[:, group] @ X[np.ix_(group, users)]
        if group.size == 1:
            k = group[0]
            D[:, k], X[k, users] = _rank_one(Eg)
        else:
            mask = X[np.ix_(group, users)] != 0
            Dg = D[:, group]
            Xg = X[np.ix_(group, users)]
            for _ in range(alternations):
                Dt, *_ = np.linalg.lstsq(Xg.T, Eg.T, rcond=None)
                Dn = Dt.T
                dead = np.linalg.norm(Dn, axis=0) < 1e-12
                Dn[:, dead] = Dg[:, dead]
                Dg = Dn
                Xg = _refit_codes(Dg, Eg, mask)
            norms = np.linalg.norm(Dg, axis=0)
            D[:, group] = Dg / norms
            X[np.ix_(group, users)] = Xg * norms[:, None]
        E[:, users] = Eg - D[:, group] @ X[np.ix_(group, users)]
    return D, X


UPDATE_METHODS = {
    "mod": dict_update_mod,
    "ksvd": dict_update_ksvd,
    "mdu": dict_update_mdu,
}


def _update(method, P, X, D, config):
    if method == "mdu":
        return dict_update_mdu(P, X, D, config.mdu_group_size)
    return UPDATE_METHODS[method](P, X, D)


def learn_dictionary(P, config: LearnConfig, init, return_codes=False, timings=None):
    """Alternate OMP coding and the configured update for ``config.iterations`` rounds.

    If ``timings`` is a list, the wall time of each update call is appended.
    """
    from time import perf_counter

    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] == 0:
        raise ValueError("training set must be a nonempty (n, J) matrix")
    D = np.array(init, dtype=np.float64)
    X = None
    for _ in range(config.iterations):
        X = sparse_code_all(P, D, config.sparsity_cap, config.error_threshold)
        t0 = perf_counter()
        D, X = _update(config.method, P, X, D, config)
        if timings is not None:
            timings.append(perf_counter() - t0)
    if return_codes:
        return D, X
    return D

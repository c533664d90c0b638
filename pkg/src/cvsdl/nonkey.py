"""Non-key frame recovery from the previous reconstruction.

The sparse codes of the current frame are pulled towards the codes of
the previous frame by a second l1 term.  The split Bregman loop alternates
a steepest-descent ``v`` step, a per-patch double-l1 shrinkage step, the
Bregman update and residual feedback on the measurements.  Its output is
refined by alternating OMP coding, a dictionary update and a linear solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dictlearn import UPDATE_METHODS, LearnConfig, dict_update_mdu
from .keyframe import DivergenceError, coding_threshold, quadratic_objective, v_update
from .metrics import psnr, ssim
from .patches import PatchLayout, aggregate_patches, extract_patches, make_layout, synthesize_image
from .sensing import SensingMatrix, apply_global_adjoint, apply_global_forward, gram_apply
from .sparse import sparse_code_all

__all__ = [
    "ConvergenceError",
    "NonKeyConfig",
    "TemporalContext",
    "shrink_double_l1",
    "double_l1_objective",
    "spectral_bound",
    "solve_patch_double_l1",
    "conjugate_gradient",
    "refine_frame",
    "sbi_nonkey_step",
    "recover_nonkey_frame",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Iterative linear solve did not reach its tolerance."""


@dataclass(frozen=True)
class NonKeyConfig:
    """Solver knobs for non-key frames.

    ``lam=None`` / ``tau=None`` place the spatial and temporal l1
    thresholds (in coefficient units, before division by ``c``) at
    ``theta1`` and ``theta2``.  ``refine_budget`` is the per-patch
    squared-error budget of the refinement OMP and ``refine_weight`` the
    patch-prior weight of the reconstruction solve.
    """

    mu: float = 2.5e-3
    lam: float | None = None
    tau: float | None = None
    theta1: float = 4.0
    theta2: float | None = None
    shrink_iters: int = 25
    c_margin: float = 1.05
    iin: int = 200
    k_max: int = 6
    tol: float = 1e-4
    patch_side: int = 8
    stride: int = 4
    refine_rounds: int = 6
    refine_dict: bool = True
    refine_weight: float = 0.5
    refine_budget: float = 2.55 ** 2 * 64
    learn: LearnConfig = field(default_factory=LearnConfig)
    cg_rtol: float = 1e-10
    cg_maxiter: int = 1000

    def __post_init__(self):
        if self.c_margin <= 1:
            raise ValueError("c_margin must exceed 1")
        if self.mu <= 0 or self.tol <= 0:
            raise ValueError("mu and tol must be positive")
        if self.shrink_iters < 1 or self.iin < 1 or self.k_max < 1:
            raise ValueError("iteration counts must be >= 1")

    def layout(self, shape) -> PatchLayout:
        return make_layout(shape, self.patch_side, self.stride)

    def thresholds(self, layout: PatchLayout):
        """Spatial and temporal thresholds ``(theta1, theta2)``."""
        if self.lam is None:
            th1 = self.theta1
        else:
            th1 = coding_threshold(self.lam, self.mu, layout)
        if self.tau is not None:
            th2 = coding_threshold(self.tau, self.mu, layout)
        elif self.theta2 is not None:
            th2 = self.theta2
        else:
            th2 = th1
        return th1, th2


@dataclass
class TemporalContext:
    """Previous reconstruction, its codes and the dictionary they live on."""

    prev_frame: np.ndarray
    prev_codes: np.ndarray
    D: np.ndarray


def _shrink_nonneg(x, t1, t2, rho):
    lo = -t1 - t2
    mid = t1 - t2
    return np.select(
        [x < lo, x <= mid, x < mid + rho, x <= t1 + t2 + rho],
        [x + t1 + t2, 0.0, x - t1 + t2, rho],
        default=x - t1 - t2,
    )


def shrink_double_l1(x, t1, t2, rho):
    """Minimizer of ``0.5 (z - x)**2 + t1 |z| + t2 |z - rho|`` (elementwise).

    Five-piece closed form for ``rho >= 0``; negative ``rho`` is handled
    by mirroring, ``sgn(rho) S(sgn(rho) x)`` with ``sgn(0) = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(np.asarray(t1) < 0) or np.any(np.asarray(t2) < 0):
        raise ValueError("shrinkage thresholds must be nonnegative")
    sgn = np.where(rho < 0, -1.0, 1.0)
    out = sgn * _shrink_nonneg(sgn * x, t1, t2, np.abs(rho))
    return out if out.ndim else float(out)


def double_l1_objective(codes, R, prev, D, theta1, theta2):
    """Per-patch objective ``0.5||D a - r||^2 + theta1 |a|_1 + theta2 |a - prev|_1`` (vector over patches)."""
    E = D @ codes - R
    return (0.5 * np.sum(E * E, axis=0) + theta1 * np.sum(np.abs(codes), axis=0)
            + theta2 * np.sum(np.abs(codes - prev), axis=0))


def spectral_bound(D) -> float:
    """Largest eigenvalue of ``D^T D``."""
    D = np.asarray(D)
    small = D @ D.T if D.shape[0] <= D.shape[1] else D.T @ D
    return float(np.linalg.eigvalsh(small)[-1])


def solve_patch_double_l1(R, prev, D, theta1, theta2, c, iters, trace=None):
    """Surrogate-function iterative shrinkage for the double-l1 patch problems.

    ``R`` holds one patch per column (a 1-D vector is treated as one
    patch) and ``prev`` the matching previous-frame codes, which are also
    the starting point.  Each iteration forms
    ``v = a + D^T (r - D a) / c`` and applies :func:`shrink_double_l1`
    with thresholds ``theta/c`` and pivot ``prev``.
    """
    R = np.asarray(R, dtype=np.float64)
    prev = np.asarray(prev, dtype=np.float64)
    single = R.ndim == 1
    if single:
        R, prev = R[:, None], prev[:, None]
    if iters < 1:
        raise ValueError("iters must be >= 1")
    bound = spectral_bound(D)
    if not c > bound:
        raise ValueError(f"surrogate constant c={c} must exceed lambda_max(D^T D)={bound}")
    t1, t2 = theta1 / c, theta2 / c
    a = prev.copy()
    if trace is not None:
        trace.append(double_l1_objective(a, R, prev, D, theta1, theta2))
    for _ in range(iters):
        v = a + (D.T @ (R - D @ a)) / c
        a = shrink_double_l1(v, t1, t2, prev)
        if trace is not None:
            trace.append(double_l1_objective(a, R, prev, D, theta1, theta2))
    return a[:, 0] if single else a


def conjugate_gradient(apply_A, b, x0=None, rtol=1e-8, maxiter=1000):
    """Conjugate gradients for a symmetric positive definite operator.

    Stops when ``||b - A x|| <= rtol ||b||``; raises :class:`ConvergenceError`
    otherwise.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_A(x)
    p = r.copy()
    rr = float(np.sum(r * r))
    target = (rtol * np.linalg.norm(b)) ** 2
    if rr <= target:
        return x
    for _ in range(maxiter):
        Ap = apply_A(p)
        alpha = rr / float(np.sum(p * Ap))
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(np.sum(r * r))
        if rr_new <= target:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(f"CG did not reach rtol={rtol} in {maxiter} iterations")


def _dict_update(P, codes, D, learn: LearnConfig):
    if learn.method == "mdu":
        return dict_update_mdu(P, codes, D, learn.mdu_group_size)
    return UPDATE_METHODS[learn.method](P, codes, D)


def refine_frame(v_star, f, phi: SensingMatrix, D, config: NonKeyConfig = None, layout=None):
    """Post-process an estimate by alternating coding, dictionary update and reconstruction.

    The reconstruction solves
    ``(Phi^T Phi + I + w sum R^T R) u = v* + Phi^T f + w sum R^T D a``
    by conjugate gradients.  Returns ``(u, codes, D)``.
    """
    config = config or NonKeyConfig()
    v_star = np.asarray(v_star, dtype=np.float64)
    shape = v_star.shape
    layout = layout or config.layout(shape)
    f = np.asarray(f, dtype=np.float64).reshape(-1, phi.m_b)
    w = config.refine_weight
    cover = layout.coverage
    base = v_star + apply_global_adjoint(f, phi, shape)

    def apply_A(u):
        return gram_apply(u, phi) + u + w * cover * u

    u = v_star.copy()
    codes = np.zeros((D.shape[1], layout.patch_count))
    for _ in range(config.refine_rounds):
        P = extract_patches(u, layout)
        codes = sparse_code_all(P, D, config.learn.sparsity_cap, config.refine_budget)
        if config.refine_dict:
            D, codes = _dict_update(P, codes, D, config.learn)
        rhs = base + w * cover * aggregate_patches(D @ codes, layout)
        u = conjugate_gradient(apply_A, rhs, u, config.cg_rtol, config.cg_maxiter)
    return u, codes, D


def sbi_nonkey_step(v, b, codes, f_k, f_meas, phi, ctx: TemporalContext, config: NonKeyConfig,
                    layout, c, trace=None):
    """One outer iteration; returns ``(v, b, codes, f_next)``."""
    th1, th2 = config.thresholds(layout)
    target = synthesize_image(codes, ctx.D, layout) - b
    v = v_update(v, f_k, phi, target, config.mu, config.iin, trace=trace)
    R = extract_patches(v + b, layout)
    codes = solve_patch_double_l1(R, ctx.prev_codes, ctx.D, th1, th2, c, config.shrink_iters)
    b = b + v - synthesize_image(codes, ctx.D, layout)
    f_next = f_k + f_meas - apply_global_forward(v, phi)
    if not np.all(np.isfinite(v)):
        raise DivergenceError("non-finite iterate in non-key step")
    return v, b, codes, f_next


def recover_nonkey_frame(f_meas, phi: SensingMatrix, ctx: TemporalContext, config: NonKeyConfig = None,
                         callback=None):
    """Recover a non-key frame; returns ``(frame, next_context)``."""
    config = config or NonKeyConfig()
    f_meas = np.asarray(f_meas, dtype=np.float64).reshape(-1, phi.m_b)
    shape = ctx.prev_frame.shape
    layout = config.layout(shape)
    if ctx.prev_codes.shape != (ctx.D.shape[1], layout.patch_count):
        raise ValueError("previous codes do not match the dictionary and patch layout")
    c = config.c_margin * spectral_bound(ctx.D)
    v = np.array(ctx.prev_frame, dtype=np.float64)
    b = np.zeros(shape)
    codes = ctx.prev_codes.copy()
    f_k = f_meas.copy()
    s_prev = 0.0
    for k in range(config.k_max):
        v_prev = v
        v, b, codes, f_k = sbi_nonkey_step(v, b, codes, f_k, f_meas, phi, ctx, config, layout, c)
        s = ssim(v, v_prev)
        if callback is not None:
            q = quadratic_objective(v, f_k, phi, synthesize_image(codes, ctx.D, layout) - b, config.mu)
            callback(k + 1, q, psnr(v, ctx.prev_frame), s)
        diff = abs(s - s_prev)
        s_prev = s
        log.debug("non-key iter %d ssim %.6f diff %.2e", k + 1, s, diff)
        if diff <= config.tol:
            break
    u, new_codes, D_t = refine_frame(v, f_meas, phi, ctx.D, config, layout)
    return u, TemporalContext(u, new_codes, D_t)

"""Key-frame recovery by split Bregman iteration with an l0 sparse prior
over an adaptively learned patch dictionary.

Each outer iteration relearns the dictionary on the patches of
``r = v + b``, codes every patch by OMP under a squared-error budget,
runs ``iin`` exact-line-search steepest descent steps on the quadratic
``v`` subproblem and updates the Bregman variable ``b``.  Iteration stops
after ``k_max`` rounds or when successive SSIM values stop changing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dctn, idctn
from scipy.signal import wiener

from .dictlearn import LearnConfig, learn_dictionary
from .metrics import psnr, ssim
from .patches import PatchLayout, extract_patches, make_layout, synthesize_image
from .sensing import SensingMatrix, apply_global_adjoint, apply_global_forward, gram_apply
from .sparse import init_dictionary, sparse_code_all

__all__ = [
    "DivergenceError",
    "KeyRecoveryConfig",
    "SbiState",
    "coding_threshold",
    "init_keyframe",
    "quadratic_objective",
    "v_update",
    "alpha_update",
    "b_update",
    "recover_keyframe",
]

log = logging.getLogger(__name__)

DELTA_FLOOR = 1e-6


class DivergenceError(FloatingPointError):
    """Non-finite iterate inside a solver."""


@dataclass(frozen=True)
class KeyRecoveryConfig:
    """Solver knobs for key frames.

    ``lam=None`` derives the l0 weight from ``pixel_budget``: the OMP
    budget becomes ``pixel_budget**2 * patch_size`` per patch, i.e. an RMS
    error of ``pixel_budget`` grey levels.
    """

    mu: float = 2.5e-3
    lam: float | None = None
    omega: float = 0.35
    iin: int = 200
    k_max: int = 6
    tol: float = 1e-4
    patch_side: int = 8
    stride: int = 4
    atom_count: int = 256
    dict_init: str = "overcomplete-dct"
    pixel_budget: float = 2.55
    initializer: str = "spl"
    learn: LearnConfig = field(default_factory=LearnConfig)

    def __post_init__(self):
        if self.mu <= 0 or self.tol <= 0 or self.omega <= 0:
            raise ValueError("mu, tol and omega must be positive")
        if self.iin < 1 or self.k_max < 1:
            raise ValueError("iin and k_max must be >= 1")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive")

    def layout(self, shape) -> PatchLayout:
        return make_layout(shape, self.patch_side, self.stride)

    def atoms_for(self, layout: PatchLayout) -> int:
        """Dictionary size actually used on ``layout``.

        ``atom_count`` is capped so every atom has at least three training
        patches (rounded down to a square, never below the patch size);
        otherwise a small frame's dictionary memorizes its own patches.
        """
        limit = layout.patch_count // 3
        if self.atom_count <= limit:
            return self.atom_count
        q = int(np.sqrt(limit))
        return max(q * q, layout.patch_size)


def coding_threshold(lam, mu, layout: PatchLayout) -> float:
    """``theta = lam * K / (mu * n)`` with ``K = B_s * J`` and ``n`` pixels."""
    K = layout.patch_size * layout.patch_count
    n = layout.shape[0] * layout.shape[1]
    return lam * K / (mu * n)


def _resolve_lambda(config: KeyRecoveryConfig, layout: PatchLayout) -> float:
    if config.lam is not None:
        return config.lam
    delta = config.pixel_budget ** 2 * layout.patch_size
    theta = delta / config.omega
    K = layout.patch_size * layout.patch_count
    n = layout.shape[0] * layout.shape[1]
    return theta * config.mu * n / K


@dataclass
class SbiState:
    v: np.ndarray
    b: np.ndarray
    codes: np.ndarray
    D: np.ndarray
    layout: PatchLayout
    k: int = 0
    last_ssim: float = 0.0

    def synth(self) -> np.ndarray:
        return synthesize_image(self.codes, self.D, self.layout)


def _tile_dct_threshold(x, thr, p, shift=0):
    """Hard-threshold the orthonormal DCT of ``p x p`` tiles (grid offset by ``shift``)."""
    x = np.roll(x, (shift, shift), axis=(0, 1))
    r, c = x.shape
    tiles = x.reshape(r // p, p, c // p, p).transpose(0, 2, 1, 3)
    coef = dctn(tiles, axes=(2, 3), norm="ortho")
    thr = np.broadcast_to(thr, coef.shape[:2])[..., None, None]
    coef = np.where(np.abs(coef) < thr, 0.0, coef)
    y = idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(r, c)
    return np.roll(y, (-shift, -shift), axis=(0, 1))


def _min_norm_estimate(f, phi, shape, p, rel_threshold):
    v = apply_global_adjoint(f, phi, shape)
    B = phi.block_side
    rows, cols = shape
    # threshold per tile = rel_threshold * max |v| over the enclosing block
    blk_max = np.abs(v).reshape(rows // B, B, cols // B, B).max(axis=(1, 3))
    thr = np.repeat(np.repeat(rel_threshold * blk_max, B // p, axis=0), B // p, axis=1)
    return _tile_dct_threshold(v, thr, p)


def init_keyframe(f, phi: SensingMatrix, shape, patch_side=8, method="spl",
                  rel_threshold=0.02, spl_iters=200, spl_lambda=6.0, spl_tol=1e-4):
    """Initial key-frame estimate, the training image of the first dictionary.

    ``min-norm``: per-block minimum-norm estimate ``Phi_B^T f_i`` followed
    by one pass of hard thresholding in the orthonormal DCT of
    ``patch_side`` tiles, with threshold ``rel_threshold`` times the
    largest magnitude of the enclosing block's estimate.

    ``spl`` (default): starts from the ``min-norm`` estimate and runs
    smoothed projected Landweber passes (3x3 Wiener smoothing, projection
    onto ``Phi v = f``, DCT hard thresholding at ``spl_lambda`` times a
    median-based noise estimate on two shifted tile grids, projection
    again) until the update size settles.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1, phi.m_b)
    B = phi.block_side
    p = patch_side if B % patch_side == 0 else B
    v = _min_norm_estimate(f, phi, shape, p, rel_threshold)
    if method == "min-norm":
        return v
    if method != "spl":
        raise ValueError(f"unknown initializer {method!r}")
    atf = apply_global_adjoint(f, phi, shape)
    v = v + atf - gram_apply(v, phi)
    rows, cols = shape
    prev_step = np.inf
    for _ in range(spl_iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = wiener(v, (3, 3)) if v.std() > 0 else v.copy()
        w = np.where(np.isfinite(w), w, v)
        w = w + atf - gram_apply(w, phi)
        tiles = w.reshape(rows // p, p, cols // p, p).transpose(0, 2, 1, 3)
        hf = np.abs(dctn(tiles, axes=(2, 3), norm="ortho")[..., p // 2:, p // 2:])
        thr = spl_lambda * np.median(hf) / 0.6745
        shifts = (0, p // 2)
        w = sum(_tile_dct_threshold(w, thr, p, s) for s in shifts) / len(shifts)
        w = w + atf - gram_apply(w, phi)
        step = np.linalg.norm(w - v)
        v = w
        if abs(prev_step - step) <= spl_tol * max(np.linalg.norm(v), 1e-12):
            break
        prev_step = step
    return v


def quadratic_objective(v, f, phi, target, mu) -> float:
    """``0.5 ||f - Phi v||^2 + mu/2 ||target - v||^2`` with ``target = D o alpha - b``."""
    r = np.asarray(f).reshape(-1, phi.m_b) - apply_global_forward(v, phi)
    d = target - v
    return 0.5 * float(np.sum(r * r)) + 0.5 * mu * float(np.sum(d * d))


def v_update(v, f, phi, target, mu, iin, trace=None):
    """``iin`` steepest descent steps with exact line search on the v subproblem.

    ``target`` is ``D o alpha - b``.  The gradient is
    ``Phi^T Phi v - Phi^T f - mu (target - v)`` and the step
    ``|g^T g / g^T (Phi^T Phi + mu I) g|``.  If ``trace`` is a list the
    objective before the first and after every step is appended.
    """
    f = np.asarray(f).reshape(-1, phi.m_b)
    atf = apply_global_adjoint(f, phi, v.shape)
    v = np.array(v, dtype=np.float64)
    if trace is not None:
        trace.append(quadratic_objective(v, f, phi, target, mu))
    for _ in range(iin):
        g = gram_apply(v, phi) - atf - mu * (target - v)
        gg = float(np.sum(g * g))
        if not np.isfinite(gg):
            raise DivergenceError("non-finite gradient in v-update")
        if gg == 0.0:
            break
        pg = apply_global_forward(g, phi)
        denom = float(np.sum(pg * pg)) + mu * gg
        eta = abs(gg / denom)
        v -= eta * g
        if trace is not None:
            trace.append(quadratic_objective(v, f, phi, target, mu))
    return v


def alpha_update(r, D, layout, learn: LearnConfig, delta, relearn=True, timings=None):
    """Relearn ``D`` on the patches of ``r`` (warm start) and OMP-code them under budget ``delta``."""
    P = extract_patches(r, layout)
    if relearn:
        D = learn_dictionary(P, replace(learn, error_threshold=delta), D, timings=timings)
    codes = sparse_code_all(P, D, learn.sparsity_cap, delta)
    return codes, D


def b_update(b, v, synth):
    """Bregman step ``b + v - D o alpha``."""
    return b + v - synth


def recover_keyframe(f, phi: SensingMatrix, shape, config: KeyRecoveryConfig = None,
                     init=None, D0=None, callback=None, timings=None, probe=None):
    """Recover one key frame from its block measurements.

    Returns ``(frame, D, codes)`` where ``frame = D o codes``.  ``init``
    overrides the built-in initial estimate; ``D0`` the starting
    dictionary.  ``callback(k, Q, psnr_vs_init, s)`` is called after every
    outer iteration and ``probe(state)`` with the :class:`SbiState`.
    """
    config = config or KeyRecoveryConfig()
    layout = config.layout(shape)
    lam = _resolve_lambda(config, layout)
    theta = coding_threshold(lam, config.mu, layout)
    delta = max(config.omega * theta, DELTA_FLOOR)
    f = np.asarray(f, dtype=np.float64)
    u_init = init_keyframe(f, phi, shape, config.patch_side, config.initializer) if init is None else np.asarray(init, float)
    if D0 is None:
        D0 = init_dictionary(layout.patch_size, config.atoms_for(layout), config.dict_init)
    state = SbiState(v=u_init.copy(), b=np.zeros(shape),
                     codes=np.zeros((D0.shape[1], layout.patch_count)), D=D0, layout=layout)
    s_prev = 0.0
    while state.k < config.k_max:
        v_prev = state.v
        r = state.v + state.b
        state.codes, state.D = alpha_update(r, state.D, layout, config.learn, delta, timings=timings)
        synth = state.synth()
        target = synth - state.b
        state.v = v_update(state.v, f, phi, target, config.mu, config.iin)
        s = ssim(state.v, v_prev)
        diff = abs(s - s_prev)
        state.b = b_update(state.b, state.v, synth)
        state.k += 1
        state.last_ssim = s
        if callback is not None:
            q = quadratic_objective(state.v, f, phi, target, config.mu)
            callback(state.k, q, psnr(state.v, u_init), s)
        if probe is not None:
            probe(state)
        log.debug("key iter %d ssim %.6f diff %.2e", state.k, s, diff)
        s_prev = s
        if diff <= config.tol:
            break
    return state.synth(), state.D, state.codes

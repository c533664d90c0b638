"""Block-based random projection: sensing matrices and the block-diagonal
forward / adjoint operators.

Blocks are enumerated in raster order over the block grid and each block
is vectorized column-major.  Measurements of a frame are kept as a
``(n_blocks, m_b)`` array; row ``i`` is the measurement vector of block ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SensingMatrix",
    "measurements_per_block",
    "gen_sensing_matrix",
    "frame_to_blocks",
    "blocks_to_frame",
    "measure_frame",
    "apply_global_forward",
    "apply_global_adjoint",
    "gram_apply",
]


@dataclass(frozen=True)
class SensingMatrix:
    """Orthonormal-row block projection ``Phi_B`` of shape ``(m_b, B*B)``."""

    entries: np.ndarray
    block_side: int
    seed: int
    mr: float

    @property
    def m_b(self) -> int:
        return self.entries.shape[0]

    @property
    def n_b(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self):
        return self.entries.T


def measurements_per_block(mr: float, block_side: int) -> int:
    # floor(mr * B^2); small epsilon guards against 0.3*1024 = 307.19999...
    return int(np.floor(mr * block_side * block_side + 1e-9))


def gen_sensing_matrix(seed: int, mr: float, block_side: int) -> SensingMatrix:
    """Seeded orthonormalized i.i.d. Gaussian projection for one block.

    Gaussian entries are drawn from ``numpy.random.default_rng(seed)`` and
    the rows orthonormalized by QR of the transpose, with the sign of each
    ``R`` diagonal entry folded into ``Q`` so the result is unique.
    """
    if not 0.0 < mr <= 1.0:
        raise ValueError(f"measurement ratio must lie in (0, 1], got {mr}")
    n_b = block_side * block_side
    m_b = measurements_per_block(mr, block_side)
    if m_b < 1:
        raise ValueError(f"mr={mr} gives zero measurements for block side {block_side}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_b, m_b))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    return SensingMatrix(np.ascontiguousarray(q.T), block_side, int(seed), float(mr))


def frame_to_blocks(frame, block_side: int) -> np.ndarray:
    """Split a frame into raster-ordered, column-major vectorized blocks."""
    frame = np.asarray(frame, dtype=np.float64)
    rows, cols = frame.shape
    if rows % block_side or cols % block_side:
        raise ValueError(
            f"frame {rows}x{cols} is not divisible by block side {block_side}")
    B = block_side
    nr, nc = rows // B, cols // B
    # (nr, i, nc, j) -> (nr, nc, j, i) so that ravel gives column-major blocks
    return frame.reshape(nr, B, nc, B).transpose(0, 2, 3, 1).reshape(nr * nc, B * B)


def blocks_to_frame(blocks, block_side: int, shape) -> np.ndarray:
    rows, cols = shape
    B = block_side
    nr, nc = rows // B, cols // B
    blocks = np.asarray(blocks)
    if blocks.shape != (nr * nc, B * B):
        raise ValueError(f"block array {blocks.shape} does not match frame {shape}")
    return blocks.reshape(nr, nc, B, B).transpose(0, 3, 1, 2).reshape(rows, cols)


def measure_frame(frame, phi: SensingMatrix, noise_sigma=0.0, noise_seed=None) -> np.ndarray:
    """Blockwise measurements ``f_i = Phi_B u_i + e_i``, shape ``(n_blocks, m_b)``."""
    f = apply_global_forward(frame, phi)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if noise_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        f = f + noise_sigma * rng.standard_normal(f.shape)
    return f


def apply_global_forward(v, phi: SensingMatrix) -> np.ndarray:
    return frame_to_blocks(v, phi.block_side) @ phi.entries.T


def apply_global_adjoint(f, phi: SensingMatrix, shape) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    rows, cols = shape
    nblocks = (rows // phi.block_side) * (cols // phi.block_side)
    f = f.reshape(nblocks, phi.m_b)
    return blocks_to_frame(f @ phi.entries, phi.block_side, shape)


def gram_apply(v, phi: SensingMatrix) -> np.ndarray:
    """``Phi^T Phi v`` without forming the global matrix."""
    blocks = frame_to_blocks(v, phi.block_side)
    return blocks_to_frame((blocks @ phi.entries.T) @ phi.entries, phi.block_side, v.shape)

"""Overlapping square patch extraction and least-squares re-assembly.

A patch set is a ``(patch_side**2, J)`` matrix whose column ``l`` is the
column-major vectorized window at anchor ``l``; anchors run in raster order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PatchLayout",
    "make_layout",
    "extract_patches",
    "aggregate_patches",
    "synthesize_image",
]


def _axis_anchors(dim, side, stride):
    if side > dim:
        raise ValueError(f"patch side {side} exceeds frame dimension {dim}")
    anchors = list(range(0, dim - side + 1, stride))
    if anchors[-1] != dim - side:
        anchors.append(dim - side)
    return np.array(anchors, dtype=np.intp)


@dataclass(frozen=True)
class PatchLayout:
    """Patch grid over a ``shape`` frame.

    The last anchor on each axis is clamped so the final patch abuts the
    frame edge; every pixel is covered at least once.
    """

    shape: tuple
    patch_side: int
    stride: int

    def __post_init__(self):
        if self.patch_side < 1 or self.stride < 1:
            raise ValueError("patch_side and stride must be positive")
        if self.stride > self.patch_side:
            raise ValueError("stride larger than patch side leaves uncovered pixels")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if min(self.shape) < self.patch_side:
            raise ValueError(f"patch side {self.patch_side} exceeds frame shape {self.shape}")

    @cached_property
    def row_anchors(self) -> np.ndarray:
        return _axis_anchors(self.shape[0], self.patch_side, self.stride)

    @cached_property
    def col_anchors(self) -> np.ndarray:
        return _axis_anchors(self.shape[1], self.patch_side, self.stride)

    @property
    def patch_size(self) -> int:
        return self.patch_side * self.patch_side

    @property
    def patch_count(self) -> int:
        return self.row_anchors.size * self.col_anchors.size

    @property
    def anchors(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r in self.row_anchors for c in self.col_anchors]

    @cached_property
    def coverage(self) -> np.ndarray:
        """Diagonal of ``sum_l R_l^T R_l`` as a frame-shaped count array."""
        cover = np.zeros(self.shape)
        p = self.patch_side
        for r in self.row_anchors:
            for c in self.col_anchors:
                cover[r:r + p, c:c + p] += 1.0
        return cover


def make_layout(shape, patch_side=8, stride=4) -> PatchLayout:
    return PatchLayout(tuple(shape), patch_side, stride)


def extract_patches(u, layout: PatchLayout) -> np.ndarray:
    """Apply every ``R_l``; returns the ``(patch_side**2, J)`` patch matrix."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != layout.shape:
        raise ValueError(f"frame shape {u.shape} does not match layout {layout.shape}")
    p = layout.patch_side
    win = sliding_window_view(u, (p, p))[np.ix_(layout.row_anchors, layout.col_anchors)]
    # win[a, b, di, dj]; column-major patch index is dj * p + di
    return win.transpose(3, 2, 0, 1).reshape(p * p, -1).copy()


def aggregate_patches(patches, layout: PatchLayout) -> np.ndarray:
    """Least-squares frame from patches: per-pixel mean of covering patches."""
    patches = np.asarray(patches, dtype=np.float64)
    p = layout.patch_side
    nar, nac = layout.row_anchors.size, layout.col_anchors.size
    if patches.shape != (p * p, nar * nac):
        raise ValueError(
            f"patch matrix {patches.shape} does not match layout ({p * p}, {nar * nac})")
    cover = layout.coverage
    if np.any(cover == 0):
        raise ValueError("layout leaves pixels uncovered")
    grid = patches.reshape(p, p, nar, nac)  # [dj, di, a, b]
    ra, ca = layout.row_anchors, layout.col_anchors
    # Average deviations from one reference copy per pixel, so identical
    # copies reproduce their value exactly.  Fixed loop order keeps the
    # result bitwise reproducible.
    ref = np.zeros(layout.shape)
    for dj in range(p):
        for di in range(p):
            ref[np.ix_(ra + di, ca + dj)] = grid[dj, di]
    acc = np.zeros(layout.shape)
    for dj in range(p):
        for di in range(p):
            ix = np.ix_(ra + di, ca + dj)
            acc[ix] += grid[dj, di] - ref[ix]
    return ref + acc / cover


def synthesize_image(codes, D, layout: PatchLayout) -> np.ndarray:
    """Realize ``D o alpha``: aggregate the patch estimates ``D @ codes``."""
    D = np.asarray(D)
    codes = np.asarray(codes)
    if codes.shape[0] != D.shape[1] or D.shape[0] != layout.patch_size:
        raise ValueError(f"dictionary {D.shape} and codes {codes.shape} are inconsistent")
    if codes.shape[1] != layout.patch_count:
        raise ValueError(f"{codes.shape[1]} codes for {layout.patch_count} patches")
    return aggregate_patches(D @ codes, layout)

"""PSNR and the global (single-window) SSIM used for quality reports and stopping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["psnr", "ssim", "QualityReport", "quality_report", "DYNAMIC_RANGE"]

DYNAMIC_RANGE = 255.0
K1, K2 = 0.01, 0.03


def _pair(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"geometry mismatch: {u.shape} vs {v.shape}")
    return u, v


def psnr(u, v) -> float:
    """``20 log10(sqrt(N) * 255 / ||u - v||)``; ``inf`` for identical frames."""
    u, v = _pair(u, v)
    err = np.linalg.norm((u - v).ravel())
    if err == 0:
        return float("inf")
    return float(20.0 * np.log10(np.sqrt(u.size) * DYNAMIC_RANGE / err))


def ssim(u, v) -> float:
    """Structural similarity from whole-frame means, variances and covariance.

    Moments use the population (divide by N) form and the stabilizers
    ``c1 = (0.01 * 255)**2``, ``c2 = (0.03 * 255)**2``.
    """
    u, v = _pair(u, v)
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    mu_u, mu_v = u.mean(), v.mean()
    du, dv = u - mu_u, v - mu_v
    var_u = np.mean(du * du)
    var_v = np.mean(dv * dv)
    cov = np.mean(du * dv)
    num = (2 * mu_u * mu_v + c1) * (2 * cov + c2)
    den = (mu_u ** 2 + mu_v ** 2 + c1) * (var_u + var_v + c2)
    return float(num / den)


@dataclass(frozen=True)
class QualityReport:
    frame_index: int
    psnr_db: float
    ssim: float

    def psnr_str(self) -> str:
        return "inf" if np.isinf(self.psnr_db) else f"{self.psnr_db:.6f}"


def quality_report(reference, recovered, frame_index=0) -> QualityReport:
    return QualityReport(frame_index, psnr(reference, recovered), ssim(reference, recovered))

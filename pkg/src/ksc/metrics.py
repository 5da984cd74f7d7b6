"""Numeric comparisons shared by the verifier and the attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

SNR_CAP_DB = 99.0
LSD_EPS = 1e-10


@dataclass(frozen=True)
class DiffStats:
    max_rel: float
    mean_rel: float
    max_abs: float


def tensor_diff(A, B) -> DiffStats:
    """Elementwise |A-B| / max(|A|, |B|, 1e-300), aggregated."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.size == 0:
        return DiffStats(0.0, 0.0, 0.0)
    absdiff = np.abs(A - B)
    rel = absdiff / np.maximum(np.maximum(np.abs(A), np.abs(B)), 1e-300)
    return DiffStats(float(rel.max()), float(rel.mean()), float(absdiff.max()))


def snr_db(reference, test) -> float:
    """10*log10(sum ref^2 / sum (ref - test)^2), capped at ``SNR_CAP_DB``."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise DimensionError(f"length mismatch {ref.shape} vs {tst.shape}")
    signal = float(np.sum(ref * ref))
    if signal == 0.0:
        raise ParameterError("SNR undefined for an all-zero reference")
    noise = float(np.sum((ref - tst) ** 2))
    if noise == 0.0 or signal / noise >= 10.0 ** (SNR_CAP_DB / 10.0):
        return SNR_CAP_DB
    return float(10.0 * np.log10(signal / noise))


def lsd_db(mag_a, mag_b, eps: float = LSD_EPS) -> float:
    """Log-spectral distance between two ``T x F`` magnitude arrays, in dB.

    Mean over frames of the RMS over bins of 20*log10((|a|+eps)/(|b|+eps)).
    """
    a = np.abs(np.asarray(mag_a, dtype=np.float64))
    b = np.abs(np.asarray(mag_b, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    d = 20.0 * np.log10((a + eps) / (b + eps))
    return float(np.mean(np.sqrt(np.mean(d * d, axis=1))))


def log_lsd_db(log_a, log_b, db_per_neper: float) -> float:
    """LSD for spectrograms already in natural-log units.

    ``db_per_neper`` is 20/ln(10) for log magnitude and 10/ln(10) for log power.
    """
    a = np.asarray(log_a, dtype=np.float64)
    b = np.asarray(log_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    d = db_per_neper * (a - b)
    return float(np.mean(np.sqrt(np.mean(d * d, axis=1))))


def spectral_convergence(target_mag, estimate_mag) -> float:
    """||estimate - target||_F / ||target||_F."""
    t = np.asarray(target_mag, dtype=np.float64)
    e = np.asarray(estimate_mag, dtype=np.float64)
    den = np.linalg.norm(t)
    if den == 0.0:
        return 0.0 if not np.any(e) else float("inf")
    return float(np.linalg.norm(e - t) / den)

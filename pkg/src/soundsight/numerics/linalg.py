"""Symmetric PSD matrix square root via eigendecomposition."""

from __future__ import annotations

import numpy as np

SYM_TOL = 1e-8
EIG_FLOOR = -1e-8
RESIDUAL_TOL = 1e-8


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Unique symmetric PSD S with S @ S ~= m.

    Requires a square matrix, symmetric within SYM_TOL (relative to scale),
    with eigenvalues no lower than EIG_FLOOR * scale; small negative
    eigenvalues are clamped to zero. The result satisfies
    ||S@S - m||_F / max(1, ||m||_F) <= 1e-8.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"psd_sqrt: expected square matrix, got {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > SYM_TOL * scale:
        raise ValueError("psd_sqrt: matrix is not symmetric within tolerance")
    sym = 0.5 * (m + m.T)
    w, u = np.linalg.eigh(sym)
    wscale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < EIG_FLOOR * wscale:
        raise ValueError(f"psd_sqrt: matrix not PSD (min eigenvalue {w.min():.3e})")
    s = (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T
    s = 0.5 * (s + s.T)
    resid = np.linalg.norm(s @ s - sym) / max(1.0, np.linalg.norm(sym))
    if resid > RESIDUAL_TOL:
        raise ValueError(f"psd_sqrt: residual {resid:.3e} exceeds tolerance")
    return s

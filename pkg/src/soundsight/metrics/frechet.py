"""Frechet distance between Gaussian fits of two embedding collections."""

from __future__ import annotations

import numpy as np

from soundsight.numerics import psd_sqrt

SHRINKAGE = 1e-6


def mean_cov(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance (ddof=1); shrinkage when n is too small
    for a full-rank estimate (n <= d + 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"mean_cov: expected (n, d) matrix, got {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError("mean_cov: need at least 2 rows")
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    if n <= d + 1:
        cov = cov + SHRINKAGE * np.eye(d)
    return mu, cov


def frechet_distance(x: np.ndarray, y: np.ndarray) -> float:
    """||mu_x - mu_y||^2 + tr(S_x + S_y - 2 sqrt(S_x S_y)).

    The cross term is evaluated as tr(sqrt(sqrt(S_x) S_y sqrt(S_x))), which
    has the same trace but keeps the matrix square root on symmetric input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"frechet_distance: dimension mismatch {x.shape} vs {y.shape}")
    mu_x, cov_x = mean_cov(x)
    mu_y, cov_y = mean_cov(y)
    sx = psd_sqrt(cov_x)
    cross = psd_sqrt(sx @ cov_y @ sx)
    diff = mu_x - mu_y
    d = float(diff @ diff + np.trace(cov_x) + np.trace(cov_y) - 2.0 * np.trace(cross))
    return max(d, 0.0)

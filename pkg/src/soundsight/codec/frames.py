"""Frame transform: non-overlapping frames -> orthonormal DCT-II coefficients.

The codec front-end. Each frame of `frame_size` samples maps to its first
`feature_dim` DCT-II coefficients; the inverse zero-pads the remaining
coefficients, so round-trips are exact only for energy inside the kept band.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=8)
def dct_basis(frame_size: int, feature_dim: int) -> np.ndarray:
    """Rows are the first `feature_dim` orthonormal DCT-II basis vectors."""
    if not 1 <= feature_dim <= frame_size:
        raise ValueError(f"dct_basis: need 1 <= feature_dim <= frame_size, got {feature_dim}/{frame_size}")
    n = np.arange(frame_size)
    k = np.arange(feature_dim)[:, None]
    basis = np.cos(np.pi * (n + 0.5) * k / frame_size)
    basis *= np.sqrt(2.0 / frame_size)
    basis[0] *= np.sqrt(0.5)
    return basis


def frame_signal(waveform: np.ndarray, frame_size: int) -> np.ndarray:
    """Split into non-overlapping frames, zero-padding the trailing partial one."""
    w = np.asarray(waveform, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"frame_signal: expected non-empty 1-D waveform, got shape {w.shape}")
    n_frames = -(-w.size // frame_size)
    padded = np.zeros(n_frames * frame_size, dtype=np.float64)
    padded[: w.size] = w
    return padded.reshape(n_frames, frame_size)


def frame_transform(waveform: np.ndarray, frame_size: int, feature_dim: int) -> np.ndarray:
    """Waveform -> (n_frames, feature_dim) DCT coefficient matrix."""
    frames = frame_signal(waveform, frame_size)
    return frames @ dct_basis(frame_size, feature_dim).T


def inverse_transform(features: np.ndarray, frame_size: int) -> np.ndarray:
    """(n_frames, feature_dim) coefficients -> waveform of n_frames*frame_size samples."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError(f"inverse_transform: expected 2-D features, got {feats.shape}")
    frames = feats @ dct_basis(frame_size, feats.shape[1])
    return frames.reshape(-1)

"""Per-pair KL divergence between class distributions, reference against generated."""

from __future__ import annotations

import numpy as np

FLOOR = 1e-10


def _floored(p: np.ndarray) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=np.float64), FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


def class_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with both distributions floored at 1e-10 and renormalized."""
    p = _floored(p)
    q = _floored(q)
    if p.shape != q.shape:
        raise ValueError(f"class_kl: shape mismatch {p.shape} vs {q.shape}")
    return float(np.sum(p * np.log(p / q)))


def kld_metric(ref_dists: np.ndarray, gen_dists: np.ndarray) -> float:
    """Mean over pairs of KL(reference_i || generated_i)."""
    ref = np.asarray(ref_dists, dtype=np.float64)
    gen = np.asarray(gen_dists, dtype=np.float64)
    if ref.shape != gen.shape or ref.ndim != 2:
        raise ValueError(f"kld_metric: need matching (n, classes) arrays, "
                         f"got {ref.shape} vs {gen.shape}")
    ref = _floored(ref)
    gen = _floored(gen)
    return float(np.mean(np.sum(ref * np.log(ref / gen), axis=-1)))

"""Cross-modal retrieval recall at rank k by cosine similarity."""

from __future__ import annotations

import numpy as np


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def match_ranks(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """1-based rank of candidate i for query i under cosine similarity.

    A candidate outranks the match if its similarity is strictly higher, or
    equal with a lower index (deterministic tie rule).
    """
    q = _unit_rows(queries)
    c = _unit_rows(candidates)
    if q.shape != c.shape or q.ndim != 2:
        raise ValueError(f"match_ranks: need matching (n, d) arrays, "
                         f"got {q.shape} vs {c.shape}")
    sims = q @ c.T
    n = sims.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = sims[i]
        m = s[i]
        ranks[i] = 1 + int((s > m).sum()) + int((s[:i] == m).sum())
    return ranks


def retrieval_eval(audio_reps: np.ndarray, visual_reps: np.ndarray,
                   ks: tuple[int, ...] = (1, 5, 10)) -> dict[str, dict[int, float]]:
    """R@k for visual->audio and audio->visual; item i is the true match of i."""
    a = np.asarray(audio_reps, dtype=np.float64)
    v = np.asarray(visual_reps, dtype=np.float64)
    if a.shape != v.shape or a.ndim != 2:
        raise ValueError(f"retrieval_eval: need matching (n, d) arrays, "
                         f"got {a.shape} vs {v.shape}")
    n = a.shape[0]
    if n < max(ks):
        raise ValueError(f"retrieval_eval: {n} candidates but R@{max(ks)} requested")
    out: dict[str, dict[int, float]] = {}
    for name, ranks in (("v2a", match_ranks(v, a)), ("a2v", match_ranks(a, v))):
        out[name] = {k: float((ranks <= k).mean()) for k in ks}
    return out

"""Decode-time schedules: Gumbel temperature annealing and cosine re-masking."""

from __future__ import annotations

import math


def anneal_alpha(t: int, t_total: int, alpha0: float) -> float:
    """Linearly annealed Gumbel temperature; alpha0 at t=0, 0 at the last step."""
    if not 0 <= t < t_total:
        raise ValueError(f"anneal_alpha: t {t} outside [0, {t_total})")
    if alpha0 < 0:
        raise ValueError("anneal_alpha: alpha0 must be >= 0")
    if t_total == 1:
        return 0.0
    # (T-1-t)/(T-1) rather than 1 - t/(T-1): same value, one rounding fewer
    return alpha0 * ((t_total - 1 - t) / (t_total - 1))


def remask_count(t: int, t_total: int, n: int) -> int:
    """Columns left masked after iteration t; cosine decay, exactly 0 at the end."""
    if not 0 <= t < t_total:
        raise ValueError(f"remask_count: t {t} outside [0, {t_total})")
    if n < 1:
        raise ValueError("remask_count: n must be >= 1")
    if t == t_total - 1:
        return 0        # cos(pi/2) in floats is ~6e-17; the endpoint must be exact
    return math.ceil(math.cos(math.pi / 2 * (t + 1) / t_total) * n)

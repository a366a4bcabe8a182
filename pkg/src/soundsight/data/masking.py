"""Mask-ratio sampling and token-grid masking for masked prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from soundsight.codec import TokenGrid

MASK_MEAN = 0.55
MASK_STD = 0.25
MASK_LO = 0.5
MASK_HI = 1.0


def sample_mask_ratio(rng: np.random.Generator, mean: float = MASK_MEAN, std: float = MASK_STD,
                      lo: float = MASK_LO, hi: float = MASK_HI) -> float:
    """Rejection-sample a truncated normal on [lo, hi]."""
    if not lo < hi or std < 0.0:
        raise ValueError(f"sample_mask_ratio: bad bounds ({lo}, {hi}) or std {std}")
    if std == 0.0:
        if not lo <= mean <= hi:
            raise ValueError("sample_mask_ratio: degenerate distribution outside bounds")
        return mean
    for _ in range(100_000):
        x = rng.normal(mean, std)
        if lo <= x <= hi:
            return float(x)
    raise RuntimeError("sample_mask_ratio: rejection sampling did not terminate")


def _mask_count(ratio: float, n: int) -> int:
    return int(np.floor(ratio * n + 0.5))


@dataclass
class MaskSpec:
    """Which cells of a grid were masked.

    Joint mode masks whole timestep columns across every level (`columns`
    set, `per_level` None); per-level mode masks columns independently per
    level (`per_level` (levels, count), `columns` None).
    """

    ratio: float
    columns: np.ndarray | None = None
    per_level: np.ndarray | None = None

    def level_columns(self, level: int) -> np.ndarray:
        if self.per_level is not None:
            return self.per_level[level]
        return self.columns


def apply_mask(grid: TokenGrid, ratio: float, rng: np.random.Generator,
               per_level: bool = False) -> tuple[TokenGrid, MaskSpec]:
    """Mask round(ratio * timesteps) uniformly chosen columns with the sentinel.

    Unmasked cells are copied bitwise. Returns the masked grid and the spec.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"apply_mask: ratio {ratio} outside [0, 1]")
    s = grid.timesteps
    count = _mask_count(ratio, s)
    tokens = grid.tokens.copy()
    if per_level:
        cols = np.stack([np.sort(rng.choice(s, size=count, replace=False))
                         for _ in range(grid.levels)])
        for lvl in range(grid.levels):
            tokens[lvl, cols[lvl]] = grid.mask_id
        spec = MaskSpec(ratio=ratio, per_level=cols.astype(np.int64))
    else:
        cols = np.sort(rng.choice(s, size=count, replace=False)).astype(np.int64)
        tokens[:, cols] = grid.mask_id
        spec = MaskSpec(ratio=ratio, columns=cols)
    return TokenGrid(tokens=tokens, vocab=grid.vocab), spec


def apply_fine_mask(grid: TokenGrid, ratio: float, rng: np.random.Generator,
                    coarse_levels: int = 4) -> tuple[TokenGrid, MaskSpec]:
    """Mask columns of the fine block only; coarse levels stay observed."""
    if grid.levels <= coarse_levels:
        raise ValueError(f"apply_fine_mask: grid has {grid.levels} levels, "
                         f"needs more than {coarse_levels}")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"apply_fine_mask: ratio {ratio} outside [0, 1]")
    s = grid.timesteps
    count = _mask_count(ratio, s)
    cols = np.sort(rng.choice(s, size=count, replace=False)).astype(np.int64)
    tokens = grid.tokens.copy()
    tokens[coarse_levels:, cols] = grid.mask_id
    return TokenGrid(tokens=tokens, vocab=grid.vocab), MaskSpec(ratio=ratio, columns=cols)

"""Linear attention biases: bias[h, i, j] = -slope_h * |i - j|.

Head slopes follow the geometric ladder 2^(-8(h+1)/H), so a single head gets
2^-8 and the steepest head always lands at 2^-8 as well. Distances span the
full concatenated sequence; cross-modal pairs get the same treatment as
intra-modal ones.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def alibi_slopes(heads: int) -> np.ndarray:
    if heads < 1:
        raise ValueError(f"alibi_slopes: heads must be >= 1, got {heads}")
    return 2.0 ** (-8.0 * np.arange(1, heads + 1) / heads)


@lru_cache(maxsize=32)
def alibi_bias(seq_len: int, heads: int) -> np.ndarray:
    """(heads, seq_len, seq_len) bias, zero diagonal, symmetric."""
    if seq_len < 1:
        raise ValueError(f"alibi_bias: seq_len must be >= 1, got {seq_len}")
    pos = np.arange(seq_len)
    dist = np.abs(pos[:, None] - pos[None, :]).astype(np.float64)
    bias = -alibi_slopes(heads)[:, None, None] * dist
    bias.setflags(write=False)
    return bias

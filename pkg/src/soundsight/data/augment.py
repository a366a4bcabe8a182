"""Training-time augmentations on (token grid, visual) pairs.

All three operate at integer-second granularity so token columns and visual
rows stay aligned: one second = tokens_per_sec columns = fps visual rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MixResult:
    tokens: np.ndarray
    visual: np.ndarray
    weight_a: float  # label weight of the first parent; the second gets 1 - weight_a


def temporal_mixup(tokens_a: np.ndarray, visual_a: np.ndarray,
                   tokens_b: np.ndarray, visual_b: np.ndarray,
                   break_sec: int, duration_sec: int,
                   tokens_per_sec: int, fps: int = 1) -> MixResult:
    """Splice a's first `break_sec` seconds onto b's remainder.

    Labels mix with weights (break/duration, 1 - break/duration).
    """
    if tokens_a.shape != tokens_b.shape or visual_a.shape != visual_b.shape:
        raise ValueError("temporal_mixup: parent shapes differ")
    if not 0 <= break_sec <= duration_sec:
        raise ValueError(f"temporal_mixup: break {break_sec} outside [0, {duration_sec}]")
    cut_cols = break_sec * tokens_per_sec
    cut_rows = break_sec * fps
    tokens = tokens_b.copy()
    tokens[:, :cut_cols] = tokens_a[:, :cut_cols]
    visual = visual_b.copy()
    visual[:cut_rows] = visual_a[:cut_rows]
    return MixResult(tokens=tokens, visual=visual, weight_a=break_sec / duration_sec)


def temporal_roll(tokens: np.ndarray, visual: np.ndarray, roll_sec: int,
                  tokens_per_sec: int, fps: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Circular shift by whole seconds, keeping the modalities in sync."""
    return (np.roll(tokens, roll_sec * tokens_per_sec, axis=1),
            np.roll(visual, roll_sec * fps, axis=0))


def visual_dropout(rng: np.random.Generator, prob: float) -> bool:
    """True = replace the visual stream with the null-condition marker."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"visual_dropout: prob {prob} outside [0, 1]")
    return bool(rng.random() < prob)

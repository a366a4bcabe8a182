"""Shared training plumbing: configs, encoded corpora, loss helpers, rng keys."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from soundsight import numerics as nm
from soundsight.codec.rvq import Codebooks, TokenGrid, encode
from soundsight.data.synth import DatasetConfig, PairedSample
from soundsight.numerics import OptimizerState, Tensor

# rng stream tags, one per draw purpose
TAG_BATCH = 0xB47C
TAG_AUG = 0xA5E1
TAG_MASK = 0x3A5C
TAG_VAL = 0x7A11
TAG_DECODE = 0xDEC0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    steps: int = 1000
    epochs: int = 0                 # > 0 derives steps from passes over the train split
    base_lr: float = 2e-4
    warmup_steps: int = 100
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.95
    label_smoothing: float = 0.1
    mixup_prob: float = 0.5
    roll_prob: float = 0.1
    visual_dropout_prob: float = 0.1
    val_fraction: float = 0.1
    eval_every: int = 50
    early_stop_ce: float = 0.0      # 0 disables early stopping
    contrastive_symmetric: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("mixup_prob", "roll_prob", "visual_dropout_prob",
                     "label_smoothing", "val_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"TrainConfig: {name} {v} outside [0, 1]")
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("TrainConfig: batch_size and steps must be >= 1")
        if self.base_lr <= 0 or self.warmup_steps < 0:
            raise ValueError("TrainConfig: bad lr schedule fields")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed,) + key))


@dataclass
class EncodedDataset:
    """A corpus after codec tokenization: everything training touches."""

    tokens: np.ndarray     # (n, levels, timesteps) int64
    visual: np.ndarray     # (n, frames, visual_dim) float64
    a_factor: np.ndarray   # (n,)
    v_factor: np.ndarray   # (n,)
    labels: np.ndarray     # (n,) composite a * C_v + v
    vocab: int
    duration: int          # seconds per clip
    fps: int = 1

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def tokens_per_sec(self) -> int:
        return self.tokens.shape[2] // self.duration

    def subset(self, idx: np.ndarray) -> "EncodedDataset":
        idx = np.asarray(idx)
        return EncodedDataset(self.tokens[idx], self.visual[idx],
                              self.a_factor[idx], self.v_factor[idx],
                              self.labels[idx], self.vocab, self.duration, self.fps)

    def coarse(self, levels: int) -> "EncodedDataset":
        """View keeping only the first `levels` token levels."""
        if not 1 <= levels <= self.tokens.shape[1]:
            raise ValueError(f"EncodedDataset.coarse: {levels} levels requested, "
                             f"have {self.tokens.shape[1]}")
        if levels == self.tokens.shape[1]:
            return self
        return EncodedDataset(self.tokens[:, :levels], self.visual,
                              self.a_factor, self.v_factor, self.labels,
                              self.vocab, self.duration, self.fps)

    def grid(self, i: int) -> TokenGrid:
        return TokenGrid(self.tokens[i], self.vocab)


def encode_dataset(samples: list[PairedSample], books: Codebooks,
                   dcfg: DatasetConfig) -> EncodedDataset:
    tokens = np.stack([encode(s.waveform, books).tokens for s in samples])
    visual = np.stack([s.visual for s in samples])
    a = np.array([s.a_factor for s in samples], dtype=np.int64)
    v = np.array([s.v_factor for s in samples], dtype=np.int64)
    labels = np.array([s.composite_label(dcfg) for s in samples], dtype=np.int64)
    return EncodedDataset(tokens, visual, a, v, labels, books.config.entries,
                          int(dcfg.duration), dcfg.visual_fps)


def resolve_steps(tcfg: TrainConfig, n_train: int) -> int:
    if tcfg.epochs > 0:
        return tcfg.epochs * math.ceil(n_train / tcfg.batch_size)
    return tcfg.steps


def make_optimizer(tcfg: TrainConfig, total_steps: int) -> OptimizerState:
    return OptimizerState(base_lr=tcfg.base_lr, warmup_steps=tcfg.warmup_steps,
                          total_steps=total_steps, beta1=tcfg.beta1, beta2=tcfg.beta2,
                          weight_decay=tcfg.weight_decay)


def stage_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Fresh trainable copies so one stage never mutates another's checkpoint."""
    return {k: Tensor(t.data.copy(), requires_grad=True) for k, t in params.items()}


def masked_mean_ce(logits, targets: np.ndarray, mask: np.ndarray,
                   label_smoothing: float = 0.0, allow_empty: bool = False):
    """Cross-entropy averaged over exactly the masked cells.

    An empty mask set is rejected unless allow_empty, where the loss is 0
    by convention (a graph-connected zero, so backward still runs).
    """
    mask = np.asarray(mask)
    count = int(mask.sum())
    if count == 0:
        if allow_empty:
            return nm.sum_(logits * 0.0)
        raise ValueError("masked_mean_ce: batch with zero masked tokens")
    per_cell = nm.cross_entropy(logits, targets, label_smoothing=label_smoothing,
                                reduction="none")
    total = nm.sum_(per_cell * mask.astype(np.float64))
    return total * (1.0 / count)


def accuracy(logits_data: np.ndarray, labels: np.ndarray) -> float:
    pred = np.asarray(logits_data).argmax(axis=-1)
    return float((pred == np.asarray(labels)).mean())

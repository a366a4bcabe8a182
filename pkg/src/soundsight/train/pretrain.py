"""Masked-token pretraining of the joint backbone.

Per step, each batch item is independently augmented (temporal mixup, then
temporal roll, then visual dropout, in that fixed rng order), a mask ratio is
drawn from the truncated normal, and whole columns are masked across all
coarse levels. The loss is label-smoothed cross-entropy averaged over masked
cells only. Validation uses fixed masks (regenerated from a dedicated rng key
each eval), no augmentation and no smoothing.
"""

from __future__ import annotations

import numpy as np

from soundsight import numerics as nm
from soundsight.codec.rvq import TokenGrid
from soundsight.data.masking import apply_mask, sample_mask_ratio
from soundsight.data.augment import temporal_mixup, temporal_roll, visual_dropout
from soundsight.model import ModelConfig, forward_logits, init_backbone
from soundsight.numerics import OptimizerState, adamw_step, no_grad

from .common import (
    TAG_AUG,
    TAG_BATCH,
    TAG_MASK,
    TAG_VAL,
    EncodedDataset,
    TrainConfig,
    make_optimizer,
    masked_mean_ce,
    resolve_steps,
    stage_params,
    stream,
)


def _augment_one(ds: EncodedDataset, i: int, rng: np.random.Generator,
                 tcfg: TrainConfig):
    tokens = ds.tokens[i]
    visual = ds.visual[i]
    dur = ds.duration
    if rng.random() < tcfg.mixup_prob:
        j = int(rng.integers(ds.n))
        cut = int(rng.integers(1, dur))
        mix = temporal_mixup(tokens, visual, ds.tokens[j], ds.visual[j],
                             cut, dur, ds.tokens_per_sec, ds.fps)
        tokens, visual = mix.tokens, mix.visual
    if rng.random() < tcfg.roll_prob:
        shift = int(rng.integers(1, dur))
        tokens, visual = temporal_roll(tokens, visual, shift,
                                       ds.tokens_per_sec, ds.fps)
    null = visual_dropout(rng, tcfg.visual_dropout_prob)
    return tokens, visual, null


def assemble_batch(ds: EncodedDataset, idx: np.ndarray, rng_aug: np.random.Generator,
                   rng_mask: np.random.Generator, tcfg: TrainConfig) -> dict:
    tokens_in, targets, masks, visuals, nulls = [], [], [], [], []
    for i in idx:
        tokens, visual, null = _augment_one(ds, int(i), rng_aug, tcfg)
        ratio = sample_mask_ratio(rng_mask)
        masked, spec = apply_mask(TokenGrid(tokens, ds.vocab), ratio, rng_mask)
        m = np.zeros(tokens.shape, dtype=bool)
        m[:, spec.columns] = True
        tokens_in.append(masked.tokens)
        targets.append(tokens)
        masks.append(m)
        visuals.append(visual)
        nulls.append(null)
    return {
        "tokens": np.stack(tokens_in),
        "targets": np.stack(targets),
        "mask": np.stack(masks),
        "visual": np.stack(visuals),
        "null": np.array(nulls, dtype=bool),
    }


def pretrain_step(params: dict, mcfg: ModelConfig, batch: dict,
                  opt: OptimizerState, label_smoothing: float = 0.1) -> float:
    logits = forward_logits(params, mcfg, batch["tokens"], batch["visual"],
                            null_flags=batch["null"])
    loss = masked_mean_ce(logits, batch["targets"], batch["mask"], label_smoothing)
    for p in params.values():
        p.grad = None
    loss.backward()
    adamw_step(params, opt)
    return float(loss.data)


def masked_val_ce(params: dict, mcfg: ModelConfig, ds: EncodedDataset,
                  tcfg: TrainConfig) -> float:
    """Masked CE without smoothing on deterministic masks (same every call)."""
    rng = stream(tcfg.seed, TAG_VAL)
    total = 0.0
    count = 0
    with no_grad():
        for start in range(0, ds.n, tcfg.batch_size):
            idx = np.arange(start, min(start + tcfg.batch_size, ds.n))
            tokens_in, targets, masks = [], [], []
            for i in idx:
                ratio = sample_mask_ratio(rng)
                masked, spec = apply_mask(ds.grid(int(i)), ratio, rng)
                m = np.zeros(masked.tokens.shape, dtype=bool)
                m[:, spec.columns] = True
                tokens_in.append(masked.tokens)
                targets.append(ds.tokens[int(i)])
                masks.append(m)
            logits = forward_logits(params, mcfg, np.stack(tokens_in), ds.visual[idx])
            per_cell = nm.cross_entropy(logits, np.stack(targets), reduction="none").data
            m = np.stack(masks)
            total += float(per_cell[m].sum())
            count += int(m.sum())
    return total / count


def run_pretrain(train_ds: EncodedDataset, val_ds: EncodedDataset,
                 mcfg: ModelConfig, tcfg: TrainConfig,
                 params: dict | None = None):
    """Full pretraining loop. Returns (params, opt, history).

    history["train"] rows are (step, loss, lr); history["val"] rows are
    (step, masked CE). Early-stops when the validation CE drops under
    tcfg.early_stop_ce (0 disables).
    """
    params = init_backbone(mcfg, tcfg.seed) if params is None else stage_params(params)
    steps = resolve_steps(tcfg, train_ds.n)
    opt = make_optimizer(tcfg, steps)
    history: dict = {"train": [], "val": []}
    for step in range(steps):
        rng_b = stream(tcfg.seed, TAG_BATCH, step)
        take = min(tcfg.batch_size, train_ds.n)
        idx = rng_b.choice(train_ds.n, size=take, replace=False)
        batch = assemble_batch(train_ds, idx, stream(tcfg.seed, TAG_AUG, step),
                               stream(tcfg.seed, TAG_MASK, step), tcfg)
        loss = pretrain_step(params, mcfg, batch, opt, tcfg.label_smoothing)
        history["train"].append((step, loss, opt.lr()))
        at_eval = tcfg.eval_every and (step + 1) % tcfg.eval_every == 0
        if at_eval and val_ds.n:
            ce = masked_val_ce(params, mcfg, val_ds, tcfg)
            history["val"].append((step + 1, ce))
            if tcfg.early_stop_ce and ce < tcfg.early_stop_ce:
                break
    if val_ds.n and (not history["val"] or history["val"][-1][0] != step + 1):
        history["val"].append((step + 1, masked_val_ce(params, mcfg, val_ds, tcfg)))
    return params, opt, history

"""Coarse-to-fine training: predict masked fine levels under observed coarse ones.

Masking draws from the same truncated-normal ratio law as pretraining but
covers columns of the fine block only. Augmentation is limited to visual
dropout; splicing augmentations would desynchronize the coarse conditioning.
"""

from __future__ import annotations

import numpy as np

from soundsight.codec.rvq import TokenGrid
from soundsight.data.augment import visual_dropout
from soundsight.data.masking import apply_fine_mask, sample_mask_ratio
from soundsight.model import C2FConfig, c2f_logits, init_c2f
from soundsight.numerics import OptimizerState, adamw_step

from .common import (
    TAG_AUG,
    TAG_BATCH,
    TAG_MASK,
    EncodedDataset,
    TrainConfig,
    make_optimizer,
    masked_mean_ce,
    resolve_steps,
    stage_params,
    stream,
)


def assemble_c2f_batch(ds: EncodedDataset, idx: np.ndarray,
                       rng_aug: np.random.Generator, rng_mask: np.random.Generator,
                       tcfg: TrainConfig, coarse_levels: int) -> dict:
    tokens_in, fine_targets, masks, nulls = [], [], [], []
    for i in idx:
        tokens = ds.tokens[int(i)]
        null = visual_dropout(rng_aug, tcfg.visual_dropout_prob)
        ratio = sample_mask_ratio(rng_mask)
        masked, spec = apply_fine_mask(TokenGrid(tokens, ds.vocab), ratio,
                                       rng_mask, coarse_levels)
        m = np.zeros((tokens.shape[0] - coarse_levels, tokens.shape[1]), dtype=bool)
        m[:, spec.columns] = True
        tokens_in.append(masked.tokens)
        fine_targets.append(tokens[coarse_levels:])
        masks.append(m)
        nulls.append(null)
    return {
        "tokens": np.stack(tokens_in),
        "fine_targets": np.stack(fine_targets),
        "mask": np.stack(masks),
        "visual": ds.visual[np.asarray(idx)],
        "null": np.array(nulls, dtype=bool),
    }


def c2f_step(params: dict, ccfg: C2FConfig, batch: dict, opt: OptimizerState,
             label_smoothing: float = 0.1) -> float:
    logits = c2f_logits(params, ccfg, batch["tokens"], batch["visual"],
                        null_flags=batch["null"])
    # nothing masked -> loss 0 by convention
    loss = masked_mean_ce(logits, batch["fine_targets"], batch["mask"],
                          label_smoothing, allow_empty=True)
    for p in params.values():
        p.grad = None
    loss.backward()
    adamw_step(params, opt)
    return float(loss.data)


def run_c2f(train_ds: EncodedDataset, ccfg: C2FConfig, tcfg: TrainConfig,
            params: dict | None = None):
    """Training loop over full 12-level grids. Returns (params, opt, history)."""
    if train_ds.tokens.shape[1] != ccfg.total_levels:
        raise ValueError(f"run_c2f: dataset has {train_ds.tokens.shape[1]} levels, "
                         f"model expects {ccfg.total_levels}")
    params = init_c2f(ccfg, tcfg.seed) if params is None else stage_params(params)
    steps = resolve_steps(tcfg, train_ds.n)
    opt = make_optimizer(tcfg, steps)
    history: dict = {"train": []}
    for step in range(steps):
        rng_b = stream(tcfg.seed, TAG_BATCH, step)
        take = min(tcfg.batch_size, train_ds.n)
        idx = rng_b.choice(train_ds.n, size=take, replace=False)
        batch = assemble_c2f_batch(train_ds, idx, stream(tcfg.seed, TAG_AUG, step),
                                   stream(tcfg.seed, TAG_MASK, step), tcfg,
                                   ccfg.coarse_levels)
        loss = c2f_step(params, ccfg, batch, opt, tcfg.label_smoothing)
        history["train"].append((step, loss, opt.lr()))
    return params, opt, history

"""Contrastive adaptation of the uni-modal expert stacks.

Each batch runs two uni-modal forwards over the first expert_layers blocks,
mean-pools and L2-normalizes to one vector per clip and modality, and applies
a temperature-scaled InfoNCE loss on the pairwise dot products, averaged over
both retrieval directions. Gradients reach only the expert stack, the input
tables/projections, and the log-temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from soundsight import numerics as nm
from soundsight.model import ModelConfig, forward_hidden
from soundsight.numerics import OptimizerState, Tensor, adamw_step

from .common import (
    TAG_BATCH,
    EncodedDataset,
    TrainConfig,
    make_optimizer,
    resolve_steps,
    stage_params,
    stream,
)

LOG_TAU_KEY = "contrastive_log_tau"


@dataclass
class ContrastiveState:
    log_tau: Tensor
    symmetric: bool = True

    @classmethod
    def fresh(cls, tau0: float = 0.05, symmetric: bool = True) -> "ContrastiveState":
        if tau0 <= 0:
            raise ValueError("ContrastiveState: tau0 must be positive")
        return cls(Tensor(np.array(math.log(tau0)), requires_grad=True), symmetric)

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau.data))


def modal_reps(params: dict, mcfg: ModelConfig, tokens, visual):
    """Unit-norm mean-pooled expert-stack outputs, one (batch, d) pair."""
    ha = forward_hidden(params, mcfg, tokens=tokens, mode="audio_only")
    hv = forward_hidden(params, mcfg, visual=visual, mode="visual_only")
    return (nm.l2_normalize(nm.mean(ha, axis=-2)),
            nm.l2_normalize(nm.mean(hv, axis=-2)))


def contrastive_loss(audio_reps, visual_reps, log_tau, symmetric: bool = True):
    """InfoNCE over rep dot products scaled by 1/tau; matched pairs on the diagonal."""
    n = audio_reps.shape[0]
    if n < 2:
        raise ValueError("contrastive_loss: need a batch of at least 2 pairs")
    if audio_reps.shape != visual_reps.shape:
        raise ValueError(f"contrastive_loss: rep shapes differ "
                         f"{audio_reps.shape} vs {visual_reps.shape}")
    sims = nm.matmul(audio_reps, nm.transpose(visual_reps, (1, 0)))
    logits = sims * nm.exp(log_tau * (-1.0))
    labels = np.arange(n)
    a2v = nm.cross_entropy(logits, labels)
    if not symmetric:
        return a2v
    v2a = nm.cross_entropy(nm.transpose(logits, (1, 0)), labels)
    return (a2v + v2a) * 0.5


def contrastive_trainables(params: dict, mcfg: ModelConfig,
                           state: ContrastiveState) -> dict:
    """The parameters the two uni-modal forwards touch, plus log tau."""
    names = [f"emb_level{l}" for l in range(mcfg.coarse_levels)]
    names += ["emb_audio", "emb_visual", "vis_proj_w", "vis_proj_b"]
    for i in range(mcfg.expert_layers):
        names += [k for k in params if k.startswith(f"L{i}_")]
    out = {k: params[k] for k in names}
    out[LOG_TAU_KEY] = state.log_tau
    return out


def contrastive_step(params: dict, mcfg: ModelConfig, state: ContrastiveState,
                     tokens, visual, opt: OptimizerState,
                     trainables: dict | None = None) -> float:
    if trainables is None:
        trainables = contrastive_trainables(params, mcfg, state)
    a, v = modal_reps(params, mcfg, tokens, visual)
    loss = contrastive_loss(a, v, state.log_tau, state.symmetric)
    for p in trainables.values():
        p.grad = None
    loss.backward()
    adamw_step(trainables, opt)
    return float(loss.data)


def run_contrastive(train_ds: EncodedDataset, mcfg: ModelConfig, tcfg: TrainConfig,
                    params: dict, state: ContrastiveState | None = None):
    """Fine-tune from an existing checkpoint. Returns (params, state, opt, history).

    The incoming params are copied; untouched layers (shared FFNs, heads)
    ride along unchanged so the result is a complete checkpoint.
    """
    if tcfg.batch_size < 2:
        raise ValueError("run_contrastive: batch_size must be >= 2")
    params = stage_params(params)
    if LOG_TAU_KEY in params:
        # resuming a contrastive checkpoint: its temperature wins
        state = ContrastiveState(params[LOG_TAU_KEY], tcfg.contrastive_symmetric)
    else:
        if state is None:
            state = ContrastiveState.fresh(symmetric=tcfg.contrastive_symmetric)
        params[LOG_TAU_KEY] = state.log_tau
    trainables = contrastive_trainables(params, mcfg, state)
    steps = resolve_steps(tcfg, train_ds.n)
    opt = make_optimizer(tcfg, steps)
    history: dict = {"train": []}
    for step in range(steps):
        rng_b = stream(tcfg.seed, TAG_BATCH, step)
        take = min(tcfg.batch_size, train_ds.n)
        idx = rng_b.choice(train_ds.n, size=take, replace=False)
        loss = contrastive_step(params, mcfg, state, train_ds.tokens[idx],
                                train_ds.visual[idx], opt, trainables)
        history["train"].append((step, loss, opt.lr()))
    return params, state, opt, history

"""Classification fine-tuning and linear probing on pooled expert-stack features.

Modes: "v" and "a" pool the matching uni-modal forward; "va" pools the joint
sequence (both modalities in one pass through the first expert_layers blocks).
The head is a single linear layer; fine-tuning updates the mode's input
tables, the expert blocks, and the head, while linear probing trains the head
alone on frozen features.
"""

from __future__ import annotations

import numpy as np

from soundsight import numerics as nm
from soundsight.model import ModelConfig, forward_hidden
from soundsight.numerics import Tensor, adamw_step, no_grad

from .common import (
    TAG_BATCH,
    EncodedDataset,
    TrainConfig,
    accuracy,
    make_optimizer,
    resolve_steps,
    stage_params,
    stream,
)

MODES = ("v", "a", "va")


def pooled_reps(params: dict, mcfg: ModelConfig, tokens=None, visual=None,
                mode: str = "a"):
    """Mean-pooled hidden states after the expert stack, (batch, d_emb)."""
    if mode not in MODES:
        raise ValueError(f"pooled_reps: unknown mode {mode!r}")
    if mode == "a":
        h = forward_hidden(params, mcfg, tokens=tokens, mode="audio_only")
    elif mode == "v":
        h = forward_hidden(params, mcfg, visual=visual, mode="visual_only")
    else:
        h = forward_hidden(params, mcfg, tokens=tokens, visual=visual,
                           mode="joint", n_layers=mcfg.expert_layers)
    return nm.mean(h, axis=-2)


def head_init(d_emb: int, n_classes: int, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(np.random.SeedSequence((0x4EAD, seed)))
    return {
        "head_w": Tensor(rng.normal(0.0, 0.02, size=(d_emb, n_classes)),
                         requires_grad=True),
        "head_b": Tensor(np.zeros(n_classes), requires_grad=True),
    }


def classify_logits(params: dict, head: dict, mcfg: ModelConfig,
                    tokens=None, visual=None, mode: str = "a"):
    reps = pooled_reps(params, mcfg, tokens, visual, mode)
    return nm.matmul(reps, head["head_w"]) + head["head_b"]


def _finetune_trainables(params: dict, mcfg: ModelConfig, mode: str) -> dict:
    names: list[str] = []
    if mode in ("a", "va"):
        names += [f"emb_level{l}" for l in range(mcfg.coarse_levels)]
        names += ["emb_audio"]
    if mode in ("v", "va"):
        names += ["emb_visual", "vis_proj_w", "vis_proj_b"]
    for i in range(mcfg.expert_layers):
        names += [k for k in params if k.startswith(f"L{i}_")]
    return {k: params[k] for k in names}


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels outside [0, {n_classes})")
    return labels


def classify_finetune(train_ds: EncodedDataset, train_labels: np.ndarray,
                      val_ds: EncodedDataset, val_labels: np.ndarray,
                      mcfg: ModelConfig, tcfg: TrainConfig, params: dict,
                      mode: str, n_classes: int):
    """Returns (params, head, val_accuracy, history)."""
    if mode not in MODES:
        raise ValueError(f"classify_finetune: unknown mode {mode!r}")
    train_labels = _check_labels(train_labels, n_classes)
    val_labels = _check_labels(val_labels, n_classes)
    params = stage_params(params)
    head = head_init(mcfg.d_emb, n_classes, tcfg.seed)
    trainables = dict(_finetune_trainables(params, mcfg, mode), **head)
    steps = resolve_steps(tcfg, train_ds.n)
    opt = make_optimizer(tcfg, steps)
    history: dict = {"train": []}
    for step in range(steps):
        rng_b = stream(tcfg.seed, TAG_BATCH, step)
        take = min(tcfg.batch_size, train_ds.n)
        idx = rng_b.choice(train_ds.n, size=take, replace=False)
        logits = classify_logits(params, head, mcfg, train_ds.tokens[idx],
                                 train_ds.visual[idx], mode)
        loss = nm.cross_entropy(logits, train_labels[idx],
                                label_smoothing=tcfg.label_smoothing)
        for p in trainables.values():
            p.grad = None
        loss.backward()
        adamw_step(trainables, opt)
        history["train"].append((step, float(loss.data), opt.lr()))
    val_acc = eval_accuracy(params, head, mcfg, val_ds, val_labels, mode,
                            tcfg.batch_size)
    return params, head, val_acc, history


def eval_accuracy(params: dict, head: dict, mcfg: ModelConfig,
                  ds: EncodedDataset, labels: np.ndarray, mode: str,
                  chunk: int = 16) -> float:
    preds = []
    with no_grad():
        for start in range(0, ds.n, chunk):
            idx = np.arange(start, min(start + chunk, ds.n))
            lg = classify_logits(params, head, mcfg, ds.tokens[idx],
                                 ds.visual[idx], mode)
            preds.append(lg.data)
    return accuracy(np.concatenate(preds), labels)


def features(params: dict, mcfg: ModelConfig, ds: EncodedDataset, mode: str,
             chunk: int = 16) -> np.ndarray:
    """Frozen pooled features for the whole dataset, (n, d_emb)."""
    out = []
    with no_grad():
        for start in range(0, ds.n, chunk):
            idx = np.arange(start, min(start + chunk, ds.n))
            r = pooled_reps(params, mcfg, ds.tokens[idx], ds.visual[idx], mode)
            out.append(r.data)
    return np.concatenate(out)


def linear_probe(train_ds: EncodedDataset, train_labels: np.ndarray,
                 val_ds: EncodedDataset, val_labels: np.ndarray,
                 mcfg: ModelConfig, tcfg: TrainConfig, params: dict,
                 mode: str, n_classes: int):
    """Head-only training on frozen features. Returns (head, val_accuracy, history).

    The backbone is read under no_grad and never handed to the optimizer, so
    its parameters are bitwise untouched.
    """
    train_labels = _check_labels(train_labels, n_classes)
    val_labels = _check_labels(val_labels, n_classes)
    x_train = features(params, mcfg, train_ds, mode)
    x_val = features(params, mcfg, val_ds, mode)
    head = head_init(mcfg.d_emb, n_classes, tcfg.seed)
    steps = resolve_steps(tcfg, train_ds.n)
    opt = make_optimizer(tcfg, steps)
    history: dict = {"train": []}
    for step in range(steps):
        rng_b = stream(tcfg.seed, TAG_BATCH, step)
        take = min(tcfg.batch_size, x_train.shape[0])
        idx = rng_b.choice(x_train.shape[0], size=take, replace=False)
        logits = nm.matmul(nm.astensor(x_train[idx]), head["head_w"]) + head["head_b"]
        loss = nm.cross_entropy(logits, train_labels[idx],
                                label_smoothing=tcfg.label_smoothing)
        head["head_w"].grad = None
        head["head_b"].grad = None
        loss.backward()
        adamw_step(head, opt)
        history["train"].append((step, float(loss.data), opt.lr()))
    val_logits = x_val @ head["head_w"].data + head["head_b"].data
    return head, accuracy(val_logits, val_labels), history


def probe_distributions(params: dict, head: dict, mcfg: ModelConfig,
                        tokens: np.ndarray, visual: np.ndarray | None = None,
                        mode: str = "a", chunk: int = 16) -> np.ndarray:
    """Softmax class distributions from a frozen probe, (n, n_classes)."""
    out = []
    with no_grad():
        for start in range(0, tokens.shape[0], chunk):
            end = min(start + chunk, tokens.shape[0])
            vis = visual[start:end] if visual is not None else None
            lg = classify_logits(params, head, mcfg, tokens[start:end], vis, mode)
            out.append(nm.softmax(nm.astensor(lg.data), axis=-1).data)
    return np.concatenate(out)


def audio_reps_from_tokens(params: dict, mcfg: ModelConfig, tokens: np.ndarray,
                           chunk: int = 16) -> np.ndarray:
    """Pooled audio-branch features for token grids alone (metric embedder)."""
    out = []
    with no_grad():
        for start in range(0, tokens.shape[0], chunk):
            r = pooled_reps(params, mcfg, tokens[start:start + chunk], None, "a")
            out.append(r.data)
    return np.concatenate(out)

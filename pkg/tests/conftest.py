"""Shared fixtures: trained pipelines reused across the acceptance suite.

The heavyweight fixtures are session-scoped so the gate criteria can share
one pretrained backbone per dataset family instead of retraining per test.
Acceptance tests record one PASS/FAIL line each; the summary hook prints the
collected lines after the normal pytest output.
"""

import time

import numpy as np
import pytest

from soundsight.codec import CodecConfig, train_codebooks
from soundsight.data.synth import DatasetConfig, build_dataset, split_indices
from soundsight.model import ModelConfig, init_backbone
from soundsight.train import TrainConfig, encode_dataset, run_pretrain

ACCEPTANCE_LINES: list[tuple[int, str]] = []


def record_criterion(n: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append((n, f"criterion {n:2d} [{name}]: {status} — {detail}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pipeline5():
    """Convergence-scale pretraining run: 512 pairs, 128-dim 8-layer backbone.

    Clip length 4 s keeps the quadratic attention cost inside the runtime
    budget on one core while leaving the contract quantities (model geometry,
    pair count, vocab, step cap) untouched.
    """
    t0 = time.perf_counter()
    dcfg = DatasetConfig(duration=4.0, pairs_per_class=32, master_seed=11)
    pairs = build_dataset(dcfg)
    tr, va, te = split_indices(dcfg, len(pairs))
    # a subset of train clips bounds the k-means distance matrices; 128 clips
    # is still 25600 frames for 256 entries per level
    train_waves = [pairs[int(i)].waveform for i in tr[:128]]
    books = train_codebooks(train_waves, CodecConfig(levels=4, entries=256,
                                                     kmeans_iters=10), seed=0)
    del train_waves
    ds = encode_dataset(pairs, books, dcfg)
    del pairs
    mcfg = ModelConfig(d_emb=128, layers=8, expert_layers=4, heads=4,
                       coarse_levels=4, vocab=256, visual_dim=32,
                       visual_frames=4, ffn_mult=4)
    # batch 2 keeps the backward graph under the container's memory;
    # augmentation off so every step spends its gradient on the objective
    tcfg = TrainConfig(batch_size=2, steps=1500, warmup_steps=60, base_lr=5e-4,
                       eval_every=50, early_stop_ce=2.60, seed=0,
                       mixup_prob=0.0, roll_prob=0.0, visual_dropout_prob=0.0)
    params, opt, hist = run_pretrain(ds.subset(tr), ds.subset(va), mcfg, tcfg)
    return {"dcfg": dcfg, "mcfg": mcfg, "tcfg": tcfg, "params": params,
            "books": books, "history": hist, "steps_run": opt.t,
            "minutes": (time.perf_counter() - t0) / 60.0}


@pytest.fixture(scope="session")
def pipelineA():
    """Independent-factor corpus (4 s clips) with a pretrained mid-size backbone.

    Feeds retrieval, fusion, and probe-ordering criteria; init_params is the
    exact random starting point of the pretrain for frozen-feature baselines.
    """
    t0 = time.perf_counter()
    dcfg = DatasetConfig(duration=4.0, pairs_per_class=24, master_seed=21)
    pairs = build_dataset(dcfg)
    tr, va, te = split_indices(dcfg, len(pairs))
    train_waves = [pairs[int(i)].waveform for i in tr]
    books = train_codebooks(train_waves, CodecConfig(levels=4, entries=64,
                                                     kmeans_iters=8), seed=0)
    del train_waves
    ds = encode_dataset(pairs, books, dcfg)
    del pairs
    mcfg = ModelConfig(d_emb=48, layers=3, expert_layers=2, heads=4,
                       coarse_levels=4, vocab=64, visual_dim=32,
                       visual_frames=4, ffn_mult=2)
    tcfg = TrainConfig(batch_size=8, steps=500, warmup_steps=50, base_lr=1e-3,
                       eval_every=100, seed=0, mixup_prob=0.0, roll_prob=0.0,
                       visual_dropout_prob=0.1)
    init_params = init_backbone(mcfg, seed=tcfg.seed)
    params, _, hist = run_pretrain(ds.subset(tr), ds.subset(va), mcfg, tcfg,
                                   params=init_params)
    return {"dcfg": dcfg, "books": books, "ds": ds, "mcfg": mcfg,
            "train": ds.subset(tr), "val": ds.subset(va), "test": ds.subset(te),
            "params": params, "init_params": init_params, "history": hist,
            "minutes": (time.perf_counter() - t0) / 60.0}


@pytest.fixture(scope="session")
def pipelineB():
    """Correlated-factor corpus (class_corr 0.8, 2 s clips) for guidance tests.

    Visual dropout is kept high during pretraining so the null-conditioning
    embedding is well trained; decoding relies on it for the guidance branch.
    """
    t0 = time.perf_counter()
    dcfg = DatasetConfig(duration=2.0, pairs_per_class=24, class_corr=0.8,
                         master_seed=31)
    pairs = build_dataset(dcfg)
    tr, va, te = split_indices(dcfg, len(pairs))
    train_waves = [pairs[int(i)].waveform for i in tr]
    books = train_codebooks(train_waves, CodecConfig(levels=4, entries=64,
                                                     kmeans_iters=8), seed=0)
    del train_waves
    ds = encode_dataset(pairs, books, dcfg)
    del pairs
    mcfg = ModelConfig(d_emb=48, layers=3, expert_layers=2, heads=4,
                       coarse_levels=4, vocab=64, visual_dim=32,
                       visual_frames=2, ffn_mult=2)
    tcfg = TrainConfig(batch_size=8, steps=600, warmup_steps=50, base_lr=1e-3,
                       eval_every=150, seed=0, mixup_prob=0.0, roll_prob=0.0,
                       visual_dropout_prob=0.15)
    params, _, hist = run_pretrain(ds.subset(tr), ds.subset(va), mcfg, tcfg)
    return {"dcfg": dcfg, "books": books, "ds": ds, "mcfg": mcfg,
            "train": ds.subset(tr), "val": ds.subset(va), "test": ds.subset(te),
            "params": params, "history": hist,
            "minutes": (time.perf_counter() - t0) / 60.0}

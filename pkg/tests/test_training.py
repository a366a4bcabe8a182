"""Training stages: masked objective, contrastive objective, heads, isolation."""

import math

import numpy as np
import pytest

from soundsight import numerics as nm
from soundsight.codec import CodecConfig, train_codebooks
from soundsight.data.synth import DatasetConfig, build_dataset, split_indices
from soundsight.model import C2FConfig, ModelConfig, init_backbone, init_c2f
from soundsight.numerics import Tensor
from soundsight.train import (
    ContrastiveState,
    TrainConfig,
    classify_finetune,
    contrastive_loss,
    contrastive_step,
    contrastive_trainables,
    encode_dataset,
    linear_probe,
    run_c2f,
    run_contrastive,
    run_pretrain,
)
from soundsight.train.classify import eval_accuracy, features
from soundsight.train.common import accuracy, masked_mean_ce, stage_params
from soundsight.train.contrastive import LOG_TAU_KEY
from soundsight.train.pretrain import masked_val_ce

MCFG = ModelConfig(d_emb=16, layers=2, expert_layers=1, heads=2, coarse_levels=4,
                   vocab=32, visual_dim=32, visual_frames=2, ffn_mult=2)


@pytest.fixture(scope="module")
def tiny():
    """Small real pipeline: synthetic pairs, trained codec, encoded splits."""
    dcfg = DatasetConfig(duration=2.0, pairs_per_class=2, master_seed=1)
    pairs = build_dataset(dcfg)
    waves = [p.waveform for p in pairs]
    books = train_codebooks(waves, CodecConfig(levels=4, entries=32, kmeans_iters=6), seed=0)
    ds = encode_dataset(pairs, books, dcfg)
    tr, va, te = split_indices(dcfg, ds.n)
    deep_books = train_codebooks(waves, CodecConfig(levels=12, entries=32, kmeans_iters=4), seed=0)
    deep = encode_dataset(pairs, deep_books, dcfg)
    return {"dcfg": dcfg, "ds": ds, "train": ds.subset(tr), "val": ds.subset(va),
            "test": ds.subset(te), "deep": deep}


def test_masked_ce_uniform_oracle():
    # zero logits over 256 classes, everything masked -> ln(256) ~ 5.5452
    logits = nm.Tensor(np.zeros((2, 4, 10, 256)))
    targets = np.random.default_rng(0).integers(0, 256, size=(2, 4, 10))
    mask = np.ones((2, 4, 10), dtype=bool)
    loss = masked_mean_ce(logits, targets, mask)
    assert abs(loss.item() - math.log(256)) < 1e-12
    assert abs(loss.item() - 5.5452) < 1e-4


def test_masked_ce_ignores_unmasked_cells():
    rng = np.random.default_rng(1)
    logits = nm.Tensor(rng.normal(size=(4, 10, 32)))
    targets = rng.integers(0, 32, size=(4, 10))
    mask = rng.random(size=(4, 10)) < 0.5
    mask[0, 0] = True
    base = masked_mean_ce(logits, targets, mask).item()
    # rewriting targets outside the mask cannot move the loss at all
    corrupted = targets.copy()
    corrupted[~mask] = (corrupted[~mask] + 7) % 32
    again = masked_mean_ce(nm.Tensor(logits.data), corrupted, mask).item()
    assert base == again


def test_masked_ce_empty_mask_contract():
    logits = nm.Tensor(np.zeros((2, 5, 8)), requires_grad=False)
    targets = np.zeros((2, 5), dtype=np.int64)
    empty = np.zeros((2, 5), dtype=bool)
    with pytest.raises(ValueError, match="zero masked"):
        masked_mean_ce(logits, targets, empty)
    loss = masked_mean_ce(logits, targets, empty, allow_empty=True)
    assert loss.item() == 0.0


def test_masked_ce_empty_mask_keeps_graph_alive():
    w = nm.Tensor(np.ones((8, 8)), requires_grad=True)
    logits = nm.matmul(nm.Tensor(np.ones((2, 5, 8))), w)
    loss = masked_mean_ce(logits, np.zeros((2, 5), dtype=np.int64),
                          np.zeros((2, 5), dtype=bool), allow_empty=True)
    loss.backward()
    assert w.grad is not None
    np.testing.assert_array_equal(w.grad, 0.0)


def test_pretrain_learns_above_uniform(tiny):
    tcfg = TrainConfig(batch_size=4, steps=150, warmup_steps=20, base_lr=1e-3,
                       eval_every=50, seed=0)
    params, opt, hist = run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg)
    train_losses = [h[1] for h in hist["train"]]
    assert np.mean(train_losses[-10:]) < np.mean(train_losses[:10])
    final_val = hist["val"][-1][1]
    assert final_val < 0.8 * math.log(32), f"val CE {final_val}"
    assert opt.t == 150


def test_pretrain_bitwise_reproducible(tiny):
    tcfg = TrainConfig(batch_size=4, steps=12, warmup_steps=4, base_lr=1e-3,
                       eval_every=0, seed=3)
    p1, _, h1 = run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg)
    p2, _, h2 = run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg)
    assert [r[1] for r in h1["train"]] == [r[1] for r in h2["train"]]
    for k in p1:
        np.testing.assert_array_equal(p1[k].data, p2[k].data)
    p3, _, h3 = run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg.with_(seed=4))
    assert [r[1] for r in h1["train"]] != [r[1] for r in h3["train"]]


def test_pretrain_early_stop(tiny):
    tcfg = TrainConfig(batch_size=4, steps=400, warmup_steps=20, base_lr=1e-3,
                       eval_every=25, early_stop_ce=3.2, seed=0)
    params, opt, hist = run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg)
    assert opt.t < 400
    assert hist["val"][-1][1] < 3.2


def test_masked_val_ce_deterministic(tiny):
    params = init_backbone(MCFG, seed=0)
    tcfg = TrainConfig(batch_size=4, seed=0)
    a = masked_val_ce(params, MCFG, tiny["val"], tcfg)
    b = masked_val_ce(params, MCFG, tiny["val"], tcfg)
    assert a == b


def test_fresh_model_masked_ce_near_uniform(tiny):
    # an untrained model with tiny init scores close to the uniform bound
    params = init_backbone(MCFG, seed=0)
    ce = masked_val_ce(params, MCFG, tiny["val"], TrainConfig(batch_size=4, seed=0))
    assert abs(ce - math.log(32)) < 0.2


def test_stage_params_copies(tiny):
    params = init_backbone(MCFG, seed=0)
    before = {k: v.data.copy() for k, v in params.items()}
    tcfg = TrainConfig(batch_size=4, steps=5, warmup_steps=2, base_lr=1e-3,
                       eval_every=0, seed=0)
    run_pretrain(tiny["train"], tiny["val"], MCFG, tcfg, params=params)
    for k in params:
        np.testing.assert_array_equal(params[k].data, before[k])


def test_contrastive_one_hot_oracle():
    # orthogonal matched pairs at tau=0.05: logits are 20 on the diagonal,
    # 0 elsewhere -> loss = ln(1 + 3 e^-20) ~ 6.18346e-9
    reps = nm.Tensor(np.eye(4))
    log_tau = nm.Tensor(np.array(math.log(0.05)))
    loss = contrastive_loss(reps, nm.Tensor(np.eye(4)), log_tau)
    expected = math.log1p(3.0 * math.exp(-20.0))
    assert abs(expected - 6.1834609e-09) < 1e-15
    np.testing.assert_allclose(loss.item(), expected, rtol=1e-6)


def test_contrastive_identical_reps_is_log_n():
    rng = np.random.default_rng(2)
    row = rng.normal(size=8)
    row /= np.linalg.norm(row)
    reps = np.tile(row, (6, 1))
    loss = contrastive_loss(nm.Tensor(reps), nm.Tensor(reps.copy()),
                            nm.Tensor(np.array(math.log(0.05))))
    np.testing.assert_allclose(loss.item(), math.log(6), rtol=1e-12)


def test_contrastive_rotation_invariance():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 8))
    v = rng.normal(size=(5, 8))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    log_tau = nm.Tensor(np.array(math.log(0.07)))
    base = contrastive_loss(nm.Tensor(a), nm.Tensor(v), log_tau).item()
    rotated = contrastive_loss(nm.Tensor(a @ q), nm.Tensor(v @ q), log_tau).item()
    np.testing.assert_allclose(base, rotated, rtol=1e-10)


def test_contrastive_batch_permutation_symmetry():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(6, 8))
    v = rng.normal(size=(6, 8))
    perm = rng.permutation(6)
    log_tau = nm.Tensor(np.array(math.log(0.05)))
    base = contrastive_loss(nm.Tensor(a), nm.Tensor(v), log_tau).item()
    shuffled = contrastive_loss(nm.Tensor(a[perm]), nm.Tensor(v[perm]), log_tau).item()
    np.testing.assert_allclose(base, shuffled, rtol=1e-12)


def test_contrastive_asymmetric_is_one_direction():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 8))
    v = rng.normal(size=(4, 8))
    log_tau = nm.Tensor(np.array(math.log(0.05)))
    sym = contrastive_loss(nm.Tensor(a), nm.Tensor(v), log_tau, symmetric=True).item()
    a2v = contrastive_loss(nm.Tensor(a), nm.Tensor(v), log_tau, symmetric=False).item()
    v2a = contrastive_loss(nm.Tensor(v.T.T), nm.Tensor(a), log_tau, symmetric=False).item()
    # the symmetric form averages the two directed losses
    sims_t = contrastive_loss(nm.Tensor(v), nm.Tensor(a), log_tau, symmetric=False).item()
    np.testing.assert_allclose(sym, 0.5 * (a2v + sims_t), rtol=1e-12)


def test_contrastive_rejects_tiny_batches_and_bad_tau():
    with pytest.raises(ValueError):
        contrastive_loss(nm.Tensor(np.ones((1, 4))), nm.Tensor(np.ones((1, 4))),
                         nm.Tensor(np.array(0.0)))
    with pytest.raises(ValueError):
        ContrastiveState.fresh(tau0=0.0)


def test_contrastive_temperature_gets_gradient():
    rng = np.random.default_rng(6)
    a, v = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    log_tau = nm.Tensor(np.array(math.log(0.05)), requires_grad=True)
    loss = contrastive_loss(nm.Tensor(a), nm.Tensor(v), log_tau)
    loss.backward()
    assert log_tau.grad is not None and log_tau.grad.shape == ()
    assert float(log_tau.grad) != 0.0


def test_contrastive_step_touches_only_declared_trainables(tiny):
    params = init_backbone(MCFG, seed=0)
    state = ContrastiveState.fresh()
    trainables = contrastive_trainables(params, MCFG, state)
    # expert stack runs layers < expert_layers plus embeddings and projections
    assert "L0_attn_q_w" in trainables and LOG_TAU_KEY in trainables
    assert "L1_attn_q_w" not in trainables  # layer 1 is past the expert stack
    assert "head0_w" not in trainables and "final_ln_g" not in trainables

    frozen_before = {k: params[k].data.copy() for k in params if k not in trainables}
    from soundsight.numerics import OptimizerState

    opt = OptimizerState(base_lr=1e-3, warmup_steps=1, total_steps=10)
    ds = tiny["train"]
    contrastive_step(params, MCFG, state, ds.tokens[:4], ds.visual[:4], opt)
    for k, before in frozen_before.items():
        np.testing.assert_array_equal(params[k].data, before)
    assert not np.array_equal(params["emb_audio"].data,
                              init_backbone(MCFG, seed=0)["emb_audio"].data)


def test_run_contrastive_decreases_loss_and_is_deterministic(tiny):
    params = init_backbone(MCFG, seed=0)
    tcfg = TrainConfig(batch_size=8, steps=40, warmup_steps=5, base_lr=3e-3,
                       eval_every=0, seed=0)
    out1, state1, _, hist1 = run_contrastive(tiny["train"], MCFG, tcfg, params)
    losses = [h[1] for h in hist1["train"]]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert LOG_TAU_KEY in out1

    out2, _, _, hist2 = run_contrastive(tiny["train"], MCFG, tcfg, params)
    assert losses == [h[1] for h in hist2["train"]]
    for k in out1:
        np.testing.assert_array_equal(out1[k].data, out2[k].data)


def test_run_contrastive_resumes_stored_temperature(tiny):
    params = init_backbone(MCFG, seed=0)
    params[LOG_TAU_KEY] = Tensor(np.array(math.log(0.5)), requires_grad=True)
    tcfg = TrainConfig(batch_size=4, steps=1, warmup_steps=0, base_lr=1e-9,
                       eval_every=0, seed=0)
    _, state, _, _ = run_contrastive(tiny["train"], MCFG, tcfg, params)
    assert abs(state.tau - 0.5) < 1e-6


def test_classify_finetune_and_label_validation(tiny):
    tcfg = TrainConfig(batch_size=8, steps=30, warmup_steps=5, base_lr=3e-3,
                       eval_every=0, seed=0)
    params = init_backbone(MCFG, seed=0)
    tr, va = tiny["train"], tiny["val"]
    out, head, acc, hist = classify_finetune(tr, tr.a_factor, va, va.a_factor,
                                             MCFG, tcfg, params, "a", 4)
    assert 0.0 <= acc <= 1.0
    assert len(hist["train"]) == 30
    losses = [h[1] for h in hist["train"]]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])

    bad = tr.a_factor.copy()
    bad[0] = 9
    with pytest.raises(ValueError, match="labels"):
        classify_finetune(tr, bad, va, va.a_factor, MCFG, tcfg, params, "a", 4)
    with pytest.raises(ValueError):
        classify_finetune(tr, tr.a_factor, va, va.a_factor, MCFG, tcfg, params, "z", 4)


def test_linear_probe_backbone_bitwise_frozen(tiny):
    params = init_backbone(MCFG, seed=0)
    before = {k: v.data.copy() for k, v in params.items()}
    tcfg = TrainConfig(batch_size=8, steps=40, warmup_steps=5, base_lr=1e-2,
                       eval_every=0, seed=0)
    tr, va = tiny["train"], tiny["val"]
    head, acc, hist = linear_probe(tr, tr.labels, va, va.labels, MCFG, tcfg,
                                   params, "a", 16)
    for k in params:
        np.testing.assert_array_equal(params[k].data, before[k])
    assert set(head) == {"head_w", "head_b"}
    assert 0.0 <= acc <= 1.0


def test_features_and_accuracy_helpers(tiny):
    params = init_backbone(MCFG, seed=0)
    tr = tiny["train"]
    f = features(params, MCFG, tr, "a", chunk=4)
    assert f.shape == (tr.n, MCFG.d_emb)
    f2 = features(params, MCFG, tr, "a", chunk=7)  # chunking cannot change values
    np.testing.assert_allclose(f, f2, atol=1e-12)

    logits = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
    assert accuracy(logits, np.array([0, 1, 0])) == 1.0
    assert accuracy(logits, np.array([1, 1, 0])) == pytest.approx(2.0 / 3.0)


def test_run_c2f_trains_and_validates_levels(tiny):
    ccfg = C2FConfig(d_emb=16, layers=2, heads=2, ffn_mult=2, coarse_levels=4,
                     total_levels=12, vocab=32, visual_dim=32, visual_frames=2)
    tcfg = TrainConfig(batch_size=4, steps=60, warmup_steps=10, base_lr=1e-3,
                       eval_every=0, seed=0)
    params, opt, hist = run_c2f(tiny["deep"], ccfg, tcfg)
    losses = [h[1] for h in hist["train"]]
    assert np.mean(losses[-10:]) < np.mean(losses[:10])

    with pytest.raises(ValueError, match="levels"):
        run_c2f(tiny["train"], ccfg, tcfg)


def test_c2f_step_empty_mask_returns_zero(tiny):
    from soundsight.numerics import OptimizerState
    from soundsight.train.c2f import c2f_step

    ccfg = C2FConfig(d_emb=16, layers=1, heads=2, ffn_mult=1, coarse_levels=4,
                     total_levels=12, vocab=32, visual_dim=32, visual_frames=2)
    params = init_c2f(ccfg, seed=0)
    deep = tiny["deep"]
    batch = {
        "tokens": deep.tokens[:2],
        "fine_targets": deep.tokens[:2, 4:],
        "mask": np.zeros((2, 8, deep.tokens.shape[2]), dtype=bool),
        "visual": deep.visual[:2],
        "null": np.array([False, False]),
    }
    opt = OptimizerState(base_lr=1e-3, warmup_steps=1, total_steps=10)
    loss = c2f_step(params, ccfg, batch, opt)
    assert loss == 0.0

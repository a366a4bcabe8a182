"""Autoregressive decoding baseline.

A plain causal transformer over the coarse grid flattened time-major with the
levels interleaved inside each timestep (t0l0 t0l1 ... t0l3 t1l0 ...), with
projected visual features as a prefix. Decoding emits one token per full
forward pass (no incremental caching), which is the cost model the speed
comparison counts. Exists only as the invocation/wall-clock baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from soundsight import numerics as nm
from soundsight import _kernels as kernels
from soundsight.codec.rvq import TokenGrid
from soundsight.model.alibi import alibi_slopes
from soundsight.numerics import OptimizerState, Tensor, adamw_step, no_grad


@dataclass(frozen=True)
class ARConfig:
    d_emb: int = 64
    layers: int = 4
    heads: int = 4
    levels: int = 4
    vocab: int = 256
    visual_dim: int = 32
    visual_frames: int = 10
    ffn_mult: int = 4
    top_k: int = 256

    def __post_init__(self):
        if self.d_emb % self.heads:
            raise ValueError("ARConfig: heads must divide d_emb")
        if min(self.d_emb, self.layers, self.heads, self.levels, self.vocab,
               self.visual_dim, self.visual_frames, self.top_k) < 1:
            raise ValueError("ARConfig: all fields must be positive")


# Large enough that adding any realistic score rounds back to the sentinel
# (f64 absorption), so masked weights underflow to exactly 0 after softmax,
# while staying finite for the library's non-finite guards.
MASKED = -1e30


@lru_cache(maxsize=16)
def causal_alibi_bias(seq_len: int, heads: int) -> np.ndarray:
    """Lower-triangular distance bias; future positions get a -1e30 sentinel."""
    slopes = alibi_slopes(heads)
    i = np.arange(seq_len)
    dist = i[:, None] - i[None, :]
    bias = -slopes[:, None, None] * dist[None, :, :].astype(np.float64)
    bias[:, dist < 0] = MASKED
    bias.setflags(write=False)
    return bias


def init_ar(cfg: ARConfig, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(np.random.SeedSequence((0xA9B5, seed)))
    scale = 0.02
    p: dict[str, Tensor] = {}

    def norm(name, shape):
        p[name] = Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)

    def zeros(name, shape):
        p[name] = Tensor(np.zeros(shape), requires_grad=True)

    def ones(name, shape):
        p[name] = Tensor(np.ones(shape), requires_grad=True)

    d, f = cfg.d_emb, cfg.ffn_mult * cfg.d_emb
    for lvl in range(cfg.levels):
        norm(f"emb_level{lvl}", (cfg.vocab, d))
    norm("vis_proj_w", (cfg.visual_dim, d))
    zeros("vis_proj_b", (d,))
    for i in range(cfg.layers):
        ones(f"L{i}_ln1_g", (d,)); zeros(f"L{i}_ln1_b", (d,))
        for nm_ in ("q", "k", "v", "o"):
            norm(f"L{i}_attn_{nm_}_w", (d, d)); zeros(f"L{i}_attn_{nm_}_b", (d,))
        ones(f"L{i}_ln2_g", (d,)); zeros(f"L{i}_ln2_b", (d,))
        norm(f"L{i}_ffn_in_w", (d, f)); zeros(f"L{i}_ffn_in_b", (f,))
        norm(f"L{i}_ffn_out_w", (f, d)); zeros(f"L{i}_ffn_out_b", (d,))
    ones("final_ln_g", (d,)); zeros("final_ln_b", (d,))
    for lvl in range(cfg.levels):
        norm(f"head{lvl}_w", (d, cfg.vocab)); zeros(f"head{lvl}_b", (cfg.vocab,))
    return p


def _embed_flat(p: dict, cfg: ARConfig, flat: np.ndarray):
    """Embed a flattened token run; position i uses level (i mod levels)'s table."""
    n = flat.shape[-1]
    lane = (np.arange(n) % cfg.levels)
    x = None
    for lvl in range(cfg.levels):
        sel = (lane == lvl).astype(np.float64)[:, None]
        e = nm.embedding(p[f"emb_level{lvl}"], flat) * sel
        x = e if x is None else x + e
    return x


def _trunk(p: dict, cfg: ARConfig, x):
    seq = x.shape[-2]
    bias = causal_alibi_bias(seq, cfg.heads)
    for i in range(cfg.layers):
        h = nm.layer_norm(x, p[f"L{i}_ln1_g"], p[f"L{i}_ln1_b"])
        q = _heads(nm.matmul(h, p[f"L{i}_attn_q_w"]) + p[f"L{i}_attn_q_b"], cfg.heads)
        k = _heads(nm.matmul(h, p[f"L{i}_attn_k_w"]) + p[f"L{i}_attn_k_b"], cfg.heads)
        v = _heads(nm.matmul(h, p[f"L{i}_attn_v_w"]) + p[f"L{i}_attn_v_b"], cfg.heads)
        nd = k.ndim
        kt = nm.transpose(k, tuple(range(nd - 2)) + (nd - 1, nd - 2))
        scores = nm.matmul(q, kt) * (1.0 / np.sqrt(q.shape[-1])) + bias
        mixed = _unheads(nm.matmul(nm.softmax(scores, axis=-1), v))
        x = x + nm.matmul(mixed, p[f"L{i}_attn_o_w"]) + p[f"L{i}_attn_o_b"]
        h = nm.layer_norm(x, p[f"L{i}_ln2_g"], p[f"L{i}_ln2_b"])
        inner = nm.gelu(nm.matmul(h, p[f"L{i}_ffn_in_w"]) + p[f"L{i}_ffn_in_b"])
        x = x + nm.matmul(inner, p[f"L{i}_ffn_out_w"]) + p[f"L{i}_ffn_out_b"]
    return nm.layer_norm(x, p["final_ln_g"], p["final_ln_b"])


def _heads(t, heads):
    *lead, s, d = t.shape
    r = nm.reshape(t, (*lead, s, heads, d // heads))
    nd = r.ndim
    return nm.transpose(r, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))


def _unheads(t):
    nd = t.ndim
    m = nm.transpose(t, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))
    *lead, s, h, dh = m.shape
    return nm.reshape(m, (*lead, s, h * dh))


def flatten_grid(tokens: np.ndarray, levels: int) -> np.ndarray:
    """(..., levels, S) -> (..., S*levels), levels interleaved per timestep."""
    moved = np.moveaxis(np.asarray(tokens), -2, -1)      # (..., S, levels)
    return moved.reshape(moved.shape[:-2] + (-1,))


def unflatten_grid(flat: np.ndarray, levels: int) -> np.ndarray:
    flat = np.asarray(flat)
    s = flat.shape[-1] // levels
    return np.moveaxis(flat.reshape(flat.shape[:-1] + (s, levels)), -1, -2)


def ar_train_logits(p: dict, cfg: ARConfig, tokens: np.ndarray, visual: np.ndarray):
    """Next-token logits for every grid cell: (..., S, levels, vocab)."""
    tokens = np.asarray(tokens)
    flat = flatten_grid(tokens, cfg.levels)
    vis = nm.matmul(nm.astensor(np.asarray(visual, dtype=np.float64)),
                    p["vis_proj_w"]) + p["vis_proj_b"]
    x = nm.concat([vis, _embed_flat(p, cfg, flat[..., :-1])], axis=-2)
    h = _trunk(p, cfg, x)
    pred = h[..., cfg.visual_frames - 1:, :]             # one hidden per grid cell
    *lead, n, d = pred.shape
    pred = nm.reshape(pred, (*lead, n // cfg.levels, cfg.levels, d))
    outs = []
    for lvl in range(cfg.levels):
        lg = nm.matmul(pred[..., lvl, :], p[f"head{lvl}_w"]) + p[f"head{lvl}_b"]
        *ld, s, v = lg.shape
        outs.append(nm.reshape(lg, (*ld, s, 1, v)))
    return nm.concat(outs, axis=-2)


def ar_train_step(p: dict, cfg: ARConfig, tokens, visual, opt: OptimizerState) -> float:
    logits = ar_train_logits(p, cfg, tokens, visual)
    targets = np.moveaxis(np.asarray(tokens), -2, -1)    # (..., S, levels)
    loss = nm.cross_entropy(logits, targets)
    for t in p.values():
        t.grad = None
    loss.backward()
    adamw_step(p, opt)
    return float(loss.data)


def ar_decode(p: dict, cfg: ARConfig, visual: np.ndarray, columns: int,
              rng: np.random.Generator):
    """Sample a grid one token at a time; returns (TokenGrid, invocations).

    Each emitted token costs one full forward over the whole prefix.
    """
    visual = np.asarray(visual, dtype=np.float64)
    flat = np.zeros(0, dtype=np.int64)
    invocations = 0
    total = columns * cfg.levels
    k = min(cfg.top_k, cfg.vocab)
    with no_grad():
        vis = nm.matmul(nm.astensor(visual), p["vis_proj_w"]) + p["vis_proj_b"]
        for pos in range(total):
            x = vis if pos == 0 else nm.concat([vis, _embed_flat(p, cfg, flat)], axis=-2)
            h = _trunk(p, cfg, x)
            lvl = pos % cfg.levels
            logits = (nm.matmul(h[-1:, :], p[f"head{lvl}_w"]) + p[f"head{lvl}_b"]).data[0]
            invocations += 1
            if k < cfg.vocab:
                cut = np.partition(logits, -k)[-k]
                logits = np.where(logits >= cut, logits, -np.inf)
            prob = kernels.softmax_last(logits[None, :])[0]
            cdf = np.cumsum(prob)
            tok = min(int((rng.random() >= cdf).sum()), cfg.vocab - 1)
            flat = np.append(flat, tok)
    grid = unflatten_grid(flat, cfg.levels)
    return TokenGrid(grid, cfg.vocab), invocations


def run_ar_training(tokens: np.ndarray, visual: np.ndarray, cfg: ARConfig,
                    steps: int, batch_size: int, base_lr: float, warmup: int,
                    seed: int):
    """Short training loop for the baseline. Returns (params, history)."""
    p = init_ar(cfg, seed)
    opt = OptimizerState(base_lr=base_lr, warmup_steps=warmup, total_steps=steps)
    n = tokens.shape[0]
    history = []
    for step in range(steps):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA9B5, step)))
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        loss = ar_train_step(p, cfg, tokens[idx], visual[idx], opt)
        history.append((step, loss, opt.lr()))
    return p, history

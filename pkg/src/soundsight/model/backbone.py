"""Forward passes: joint multiway encoder, uni-modal branches, coarse-to-fine.

Sequence layout is [visual block | audio block]. Pre-norm residual blocks;
bidirectional attention with additive linear position bias. The first
`expert_layers` blocks route each modality's positions through that
modality's FFN (attention is always shared); later blocks share one FFN.
Uni-modal passes run only the expert stack, touching a single expert path.

All entry points accept either unbatched inputs (tokens (L, S)) or a leading
batch dimension (tokens (B, L, S)); everything operates on the trailing axes.
"""

from __future__ import annotations

import numpy as np

from soundsight import numerics as nm
from soundsight.numerics import Tensor

from .alibi import alibi_bias
from .config import C2FConfig, ModelConfig

MODES = ("joint", "audio_only", "visual_only")


def _split_heads(t: Tensor, heads: int) -> Tensor:
    *lead, s, d = t.shape
    r = nm.reshape(t, (*lead, s, heads, d // heads))
    nd = r.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    return nm.transpose(r, perm)


def _merge_heads(t: Tensor) -> Tensor:
    nd = t.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    m = nm.transpose(t, perm)
    *lead, s, h, dh = m.shape
    return nm.reshape(m, (*lead, s, h * dh))


def _attention(p: dict, i: int, heads: int, x: Tensor, bias: np.ndarray) -> Tensor:
    q = _split_heads(nm.matmul(x, p[f"L{i}_attn_q_w"]) + p[f"L{i}_attn_q_b"], heads)
    k = _split_heads(nm.matmul(x, p[f"L{i}_attn_k_w"]) + p[f"L{i}_attn_k_b"], heads)
    v = _split_heads(nm.matmul(x, p[f"L{i}_attn_v_w"]) + p[f"L{i}_attn_v_b"], heads)
    nd = k.ndim
    kt = nm.transpose(k, tuple(range(nd - 2)) + (nd - 1, nd - 2))
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = nm.matmul(q, kt) * scale + bias
    mixed = nm.matmul(nm.softmax(scores, axis=-1), v)
    return nm.matmul(_merge_heads(mixed), p[f"L{i}_attn_o_w"]) + p[f"L{i}_attn_o_b"]


def _ffn(p: dict, prefix: str, h: Tensor) -> Tensor:
    inner = nm.gelu(nm.matmul(h, p[f"{prefix}_in_w"]) + p[f"{prefix}_in_b"])
    return nm.matmul(inner, p[f"{prefix}_out_w"]) + p[f"{prefix}_out_b"]


def _ln(p: dict, prefix: str, x: Tensor) -> Tensor:
    return nm.layer_norm(x, p[f"{prefix}_g"], p[f"{prefix}_b"])


def embed_audio(p: dict, cfg, tokens) -> Tensor:
    """Sum per-level token embeddings plus the audio modality embedding."""
    tokens = np.asarray(tokens)
    levels = cfg.coarse_levels if isinstance(cfg, ModelConfig) else cfg.total_levels
    if tokens.ndim < 2 or tokens.shape[-2] != levels:
        raise ValueError(f"embed_audio: expected (..., {levels}, S) tokens, got {tokens.shape}")
    x = nm.embedding(p["emb_level0"], tokens[..., 0, :])
    for lvl in range(1, levels):
        x = x + nm.embedding(p[f"emb_level{lvl}"], tokens[..., lvl, :])
    return x + p["emb_audio"]


def embed_visual(p: dict, cfg, visual, null_flags=None) -> Tensor:
    """Project visual features (or substitute the learned null row) + modality embedding.

    null_flags: None (all conditioned), bool, or bool array over batch dims.
    """
    visual = np.asarray(visual, dtype=np.float64)
    if visual.ndim < 2 or visual.shape[-2:] != (cfg.visual_frames, cfg.visual_dim):
        raise ValueError(
            f"embed_visual: expected (..., {cfg.visual_frames}, {cfg.visual_dim}), got {visual.shape}"
        )
    proj = nm.matmul(nm.astensor(visual), p["vis_proj_w"]) + p["vis_proj_b"]
    if null_flags is None:
        out = proj
    else:
        m = np.asarray(null_flags, dtype=np.float64)
        if m.shape != visual.shape[:-2]:
            raise ValueError(f"embed_visual: null_flags {m.shape} vs batch {visual.shape[:-2]}")
        m = m.reshape(m.shape + (1, 1))
        out = proj * (1.0 - m) + p["emb_null"] * m
    return out + p["emb_visual"]


def embed_inputs(p: dict, cfg: ModelConfig, tokens, visual, null_flags=None) -> Tensor:
    """Joint sequence: visual block first, audio block second."""
    return nm.concat([embed_visual(p, cfg, visual, null_flags),
                      embed_audio(p, cfg, tokens)], axis=-2)


def forward_hidden(p: dict, cfg: ModelConfig, tokens=None, visual=None, null_flags=None,
                   mode: str = "joint", n_layers: int | None = None, collect: bool = False):
    """Hidden states after n_layers blocks (no final norm applied here).

    Joint mode defaults to the full stack; uni-modal modes run exactly the
    expert stack and reject deeper requests. collect=True also returns the
    per-layer hidden list.
    """
    if mode not in MODES:
        raise ValueError(f"forward_hidden: unknown mode {mode!r}")
    if mode == "joint":
        x = embed_inputs(p, cfg, tokens, visual, null_flags)
        n = cfg.layers if n_layers is None else n_layers
        if not 1 <= n <= cfg.layers:
            raise ValueError(f"forward_hidden: n_layers {n} outside [1, {cfg.layers}]")
    else:
        x = embed_audio(p, cfg, tokens) if mode == "audio_only" \
            else embed_visual(p, cfg, visual, null_flags)
        n = cfg.expert_layers if n_layers is None else n_layers
        if not 1 <= n <= cfg.expert_layers:
            raise ValueError(
                f"forward_hidden: uni-modal passes use at most the {cfg.expert_layers} expert layers"
            )
    boundary = cfg.visual_frames
    bias = alibi_bias(x.shape[-2], cfg.heads)
    hiddens = []
    for i in range(n):
        x = x + _attention(p, i, cfg.heads, _ln(p, f"L{i}_ln1", x), bias)
        h = _ln(p, f"L{i}_ln2", x)
        if i < cfg.expert_layers:
            if mode == "joint":
                f = nm.concat([
                    _ffn(p, f"L{i}_ffn_visual", h[..., :boundary, :]),
                    _ffn(p, f"L{i}_ffn_audio", h[..., boundary:, :]),
                ], axis=-2)
            elif mode == "audio_only":
                f = _ffn(p, f"L{i}_ffn_audio", h)
            else:
                f = _ffn(p, f"L{i}_ffn_visual", h)
        else:
            f = _ffn(p, f"L{i}_ffn_shared", h)
        x = x + f
        if collect:
            hiddens.append(x)
    return (x, hiddens) if collect else x


def forward_logits(p: dict, cfg: ModelConfig, tokens, visual, null_flags=None) -> Tensor:
    """Full joint pass -> (..., coarse_levels, S, vocab) prediction logits."""
    h = forward_hidden(p, cfg, tokens, visual, null_flags, mode="joint")
    h = _ln(p, "final_ln", h)
    audio = h[..., cfg.visual_frames:, :]
    pieces = []
    for lvl in range(cfg.coarse_levels):
        lg = nm.matmul(audio, p[f"head{lvl}_w"]) + p[f"head{lvl}_b"]
        *lead, s, v = lg.shape
        pieces.append(nm.reshape(lg, (*lead, 1, s, v)))
    return nm.concat(pieces, axis=-3)


def c2f_logits(p: dict, cfg: C2FConfig, tokens, visual, null_flags=None) -> Tensor:
    """Coarse-to-fine pass -> (..., fine_levels, S, vocab) logits.

    The coarse block must be fully observed; fine rows may carry masks.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim < 2 or tokens.shape[-2] != cfg.total_levels:
        raise ValueError(f"c2f_logits: expected (..., {cfg.total_levels}, S) tokens, got {tokens.shape}")
    if (tokens[..., : cfg.coarse_levels, :] == cfg.mask_id).any():
        raise ValueError("c2f_logits: coarse levels contain mask sentinels")
    x = nm.concat([embed_visual(p, cfg, visual, null_flags),
                   embed_audio(p, cfg, tokens)], axis=-2)
    bias = alibi_bias(x.shape[-2], cfg.heads)
    for i in range(cfg.layers):
        x = x + _attention(p, i, cfg.heads, _ln(p, f"L{i}_ln1", x), bias)
        x = x + _ffn(p, f"L{i}_ffn_shared", _ln(p, f"L{i}_ln2", x))
    h = _ln(p, "final_ln", x)
    audio = h[..., cfg.visual_frames:, :]
    pieces = []
    for lvl in range(cfg.coarse_levels, cfg.total_levels):
        lg = nm.matmul(audio, p[f"head{lvl}_w"]) + p[f"head{lvl}_b"]
        *lead, s, v = lg.shape
        pieces.append(nm.reshape(lg, (*lead, 1, s, v)))
    return nm.concat(pieces, axis=-3)

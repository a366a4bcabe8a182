"""Parameter initialization for the backbone and coarse-to-fine models.

Parameters live in a flat name -> Tensor dict (insertion order is the
canonical order). Weights are 0.02-scaled normals, biases zero, layer norm
gain/shift one/zero. Deterministic in (config, seed).
"""

from __future__ import annotations

import numpy as np

from soundsight.numerics import Tensor

from .config import C2FConfig, ModelConfig

INIT_SCALE = 0.02


class _Init:
    def __init__(self, seed: int, tag: int):
        self.rng = np.random.default_rng(np.random.SeedSequence((tag, seed)))
        self.params: dict[str, Tensor] = {}

    def normal(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = Tensor(INIT_SCALE * self.rng.standard_normal(shape), requires_grad=True)

    def zeros(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

    def ones(self, name: str, shape: tuple[int, ...]) -> None:
        self.params[name] = Tensor(np.ones(shape), requires_grad=True)

    def linear(self, prefix: str, d_in: int, d_out: int) -> None:
        self.normal(f"{prefix}_w", (d_in, d_out))
        self.zeros(f"{prefix}_b", (d_out,))

    def layernorm(self, prefix: str, d: int) -> None:
        self.ones(f"{prefix}_g", (d,))
        self.zeros(f"{prefix}_b", (d,))

    def ffn(self, prefix: str, d: int, hidden: int) -> None:
        self.linear(f"{prefix}_in", d, hidden)
        self.linear(f"{prefix}_out", hidden, d)

    def block_common(self, i: int, d: int) -> None:
        self.layernorm(f"L{i}_ln1", d)
        for part in ("q", "k", "v", "o"):
            self.linear(f"L{i}_attn_{part}", d, d)
        self.layernorm(f"L{i}_ln2", d)


def init_backbone(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    b = _Init(seed, 0xB0BE)
    d, h = cfg.d_emb, cfg.d_emb * cfg.ffn_mult
    for lvl in range(cfg.coarse_levels):
        b.normal(f"emb_level{lvl}", (cfg.vocab + 1, d))
    b.linear("vis_proj", cfg.visual_dim, d)
    b.normal("emb_audio", (d,))
    b.normal("emb_visual", (d,))
    b.normal("emb_null", (d,))
    for i in range(cfg.layers):
        b.block_common(i, d)
        if i < cfg.expert_layers:
            b.ffn(f"L{i}_ffn_audio", d, h)
            b.ffn(f"L{i}_ffn_visual", d, h)
        else:
            b.ffn(f"L{i}_ffn_shared", d, h)
    b.layernorm("final_ln", d)
    for lvl in range(cfg.coarse_levels):
        b.linear(f"head{lvl}", d, cfg.vocab)
    return b.params


def init_c2f(cfg: C2FConfig, seed: int = 0) -> dict[str, Tensor]:
    b = _Init(seed, 0xC2F0)
    d, h = cfg.d_emb, cfg.d_emb * cfg.ffn_mult
    for lvl in range(cfg.total_levels):
        b.normal(f"emb_level{lvl}", (cfg.vocab + 1, d))
    b.linear("vis_proj", cfg.visual_dim, d)
    b.normal("emb_audio", (d,))
    b.normal("emb_visual", (d,))
    b.normal("emb_null", (d,))
    for i in range(cfg.layers):
        b.block_common(i, d)
        b.ffn(f"L{i}_ffn_shared", d, h)
    b.layernorm("final_ln", d)
    for lvl in range(cfg.coarse_levels, cfg.total_levels):
        b.linear(f"head{lvl}", d, cfg.vocab)
    return b.params


def param_count(params: dict[str, Tensor]) -> int:
    return sum(p.data.size for p in params.values())

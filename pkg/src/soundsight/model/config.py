"""Model geometry dataclasses for the backbone and the coarse-to-fine head."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ModelConfig:
    """Backbone: modal-expert FFNs in the first `expert_layers`, shared after.

    One prediction head per coarse level. Embedding tables carry vocab+1
    rows; the extra row is the mask sentinel.
    """

    d_emb: int = 128
    layers: int = 8
    expert_layers: int = 4
    heads: int = 4
    coarse_levels: int = 4
    vocab: int = 256
    visual_dim: int = 32
    visual_frames: int = 10
    ffn_mult: int = 4

    def __post_init__(self):
        if not 0 <= self.expert_layers <= self.layers:
            raise ValueError(f"ModelConfig: expert_layers {self.expert_layers} outside [0, {self.layers}]")
        if self.d_emb % self.heads != 0:
            raise ValueError(f"ModelConfig: heads {self.heads} must divide d_emb {self.d_emb}")
        if min(self.d_emb, self.layers, self.heads, self.coarse_levels, self.vocab,
               self.visual_dim, self.visual_frames, self.ffn_mult) < 1:
            raise ValueError("ModelConfig: all dimensions must be positive")

    @property
    def mask_id(self) -> int:
        return self.vocab


@dataclass(frozen=True)
class C2FConfig:
    """Coarse-to-fine refiner: no modal experts, all token levels embedded,
    one prediction head per fine level."""

    d_emb: int = 128
    layers: int = 6
    heads: int = 4
    total_levels: int = 12
    coarse_levels: int = 4
    vocab: int = 256
    visual_dim: int = 32
    visual_frames: int = 10
    ffn_mult: int = 4

    def __post_init__(self):
        if not 1 <= self.coarse_levels < self.total_levels:
            raise ValueError(f"C2FConfig: coarse {self.coarse_levels} must be < total {self.total_levels}")
        if self.d_emb % self.heads != 0:
            raise ValueError(f"C2FConfig: heads {self.heads} must divide d_emb {self.d_emb}")

    @property
    def fine_levels(self) -> int:
        return self.total_levels - self.coarse_levels

    @property
    def mask_id(self) -> int:
        return self.vocab


def config_to_fields(cfg) -> dict[str, str]:
    kind = "backbone" if isinstance(cfg, ModelConfig) else "c2f"
    out = {"kind": kind}
    out.update({k: str(v) for k, v in asdict(cfg).items()})
    return out


def config_from_fields(fields: dict[str, str]):
    kind = fields.get("kind")
    cls = {"backbone": ModelConfig, "c2f": C2FConfig}.get(kind)
    if cls is None:
        raise ValueError(f"config_from_fields: unknown model kind {kind!r}")
    kwargs = {k: int(v) for k, v in fields.items() if k != "kind"}
    return cls(**kwargs)

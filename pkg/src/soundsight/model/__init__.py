from .alibi import alibi_bias, alibi_slopes
from .backbone import (
    MODES,
    c2f_logits,
    embed_audio,
    embed_inputs,
    embed_visual,
    forward_hidden,
    forward_logits,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import C2FConfig, ModelConfig, config_from_fields, config_to_fields
from .params import init_backbone, init_c2f, param_count

__all__ = [
    "C2FConfig",
    "MODES",
    "ModelConfig",
    "alibi_bias",
    "alibi_slopes",
    "c2f_logits",
    "config_from_fields",
    "config_to_fields",
    "embed_audio",
    "embed_inputs",
    "embed_visual",
    "forward_hidden",
    "forward_logits",
    "init_backbone",
    "init_c2f",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
]

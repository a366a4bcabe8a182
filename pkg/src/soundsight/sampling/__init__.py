from .decode import (
    DecodeConfig,
    DecodeTrace,
    TraceRow,
    c2f_logits_fn,
    cfg_logits,
    coarse_to_fine,
    confidence,
    decode_grid,
    generate,
    iterative_decode,
    model_logits_fn,
)
from .schedule import anneal_alpha, remask_count

__all__ = [
    "DecodeConfig",
    "DecodeTrace",
    "TraceRow",
    "anneal_alpha",
    "c2f_logits_fn",
    "cfg_logits",
    "coarse_to_fine",
    "confidence",
    "decode_grid",
    "generate",
    "iterative_decode",
    "model_logits_fn",
    "remask_count",
]

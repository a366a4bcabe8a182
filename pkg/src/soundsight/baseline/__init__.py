from .ar import (
    ARConfig,
    ar_decode,
    ar_train_logits,
    ar_train_step,
    causal_alibi_bias,
    flatten_grid,
    init_ar,
    run_ar_training,
    unflatten_grid,
)

__all__ = [
    "ARConfig",
    "ar_decode",
    "ar_train_logits",
    "ar_train_step",
    "causal_alibi_bias",
    "flatten_grid",
    "init_ar",
    "run_ar_training",
    "unflatten_grid",
]

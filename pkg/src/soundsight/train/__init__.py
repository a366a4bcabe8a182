from .c2f import assemble_c2f_batch, c2f_step, run_c2f
from .classify import (
    audio_reps_from_tokens,
    classify_finetune,
    classify_logits,
    eval_accuracy,
    features,
    head_init,
    linear_probe,
    pooled_reps,
    probe_distributions,
)
from .common import (
    EncodedDataset,
    TrainConfig,
    accuracy,
    encode_dataset,
    make_optimizer,
    masked_mean_ce,
    resolve_steps,
    stage_params,
    stream,
)
from .contrastive import (
    LOG_TAU_KEY,
    ContrastiveState,
    contrastive_loss,
    contrastive_step,
    contrastive_trainables,
    modal_reps,
    run_contrastive,
)
from .pretrain import (
    assemble_batch,
    masked_val_ce,
    pretrain_step,
    run_pretrain,
)

__all__ = [
    "ContrastiveState",
    "EncodedDataset",
    "LOG_TAU_KEY",
    "TrainConfig",
    "accuracy",
    "assemble_batch",
    "assemble_c2f_batch",
    "audio_reps_from_tokens",
    "c2f_step",
    "classify_finetune",
    "classify_logits",
    "contrastive_loss",
    "contrastive_step",
    "contrastive_trainables",
    "encode_dataset",
    "eval_accuracy",
    "features",
    "head_init",
    "linear_probe",
    "make_optimizer",
    "masked_mean_ce",
    "masked_val_ce",
    "modal_reps",
    "pooled_reps",
    "pretrain_step",
    "probe_distributions",
    "resolve_steps",
    "run_c2f",
    "run_contrastive",
    "run_pretrain",
    "stage_params",
    "stream",
]

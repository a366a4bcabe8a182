from .augment import MixResult, temporal_mixup, temporal_roll, visual_dropout
from .files import read_manifest, read_visual, write_manifest, write_visual
from .masking import (
    MASK_HI,
    MASK_LO,
    MASK_MEAN,
    MASK_STD,
    MaskSpec,
    apply_fine_mask,
    apply_mask,
    sample_mask_ratio,
)
from .synth import (
    DatasetConfig,
    PairedSample,
    build_dataset,
    event_vector,
    freq_bank,
    generate_pair,
    split_indices,
    visual_mean,
)

__all__ = [
    "DatasetConfig",
    "MASK_HI",
    "MASK_LO",
    "MASK_MEAN",
    "MASK_STD",
    "MaskSpec",
    "MixResult",
    "PairedSample",
    "apply_fine_mask",
    "apply_mask",
    "build_dataset",
    "event_vector",
    "freq_bank",
    "generate_pair",
    "read_manifest",
    "read_visual",
    "sample_mask_ratio",
    "split_indices",
    "temporal_mixup",
    "temporal_roll",
    "visual_dropout",
    "visual_mean",
    "write_manifest",
    "write_visual",
]

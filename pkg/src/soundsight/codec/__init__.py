from .frames import dct_basis, frame_signal, frame_transform, inverse_transform
from .io import (
    FormatError,
    read_codebooks,
    read_tokens,
    read_wav,
    write_codebooks,
    write_tokens,
    write_wav,
)
from .rvq import Codebooks, CodecConfig, TokenGrid, decode, encode, encode_features, recon_snr, train_codebooks

__all__ = [
    "Codebooks",
    "CodecConfig",
    "FormatError",
    "TokenGrid",
    "dct_basis",
    "decode",
    "encode",
    "encode_features",
    "frame_signal",
    "frame_transform",
    "inverse_transform",
    "read_codebooks",
    "read_tokens",
    "read_wav",
    "recon_snr",
    "train_codebooks",
    "write_codebooks",
    "write_tokens",
    "write_wav",
]

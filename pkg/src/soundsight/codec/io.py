"""Binary interchange formats: WAV (PCM16 mono), token grids, codebooks.

All multi-byte fields are little-endian. Magic strings: "VABT" token grids,
"VABC" codebooks.
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .rvq import Codebooks, CodecConfig, TokenGrid

TOKEN_MAGIC = b"VABT"
CODEBOOK_MAGIC = b"VABC"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """File does not match the declared layout."""


def write_wav(path, waveform: np.ndarray, sample_rate: int) -> None:
    """Write mono PCM16; float input is clipped to [-1, 1] and scaled."""
    w = np.asarray(waveform, dtype=np.float64).ravel()
    pcm = np.round(np.clip(w, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise FormatError(f"{path}: expected mono PCM16")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return pcm.astype(np.float64) / 32767.0, sr


def write_tokens(path, grid: TokenGrid) -> None:
    if grid.has_masks():
        raise FormatError("write_tokens: grid contains mask sentinels")
    if grid.vocab > 0xFFFF:
        raise FormatError(f"write_tokens: vocab {grid.vocab} exceeds u16 range")
    header = TOKEN_MAGIC + struct.pack("<IIII", FORMAT_VERSION, grid.levels, grid.timesteps, grid.vocab)
    Path(path).write_bytes(header + grid.tokens.astype("<u2").tobytes())


def read_tokens(path) -> TokenGrid:
    blob = Path(path).read_bytes()
    if len(blob) < 20 or blob[:4] != TOKEN_MAGIC:
        raise FormatError(f"{path}: bad token file magic")
    version, levels, timesteps, vocab = struct.unpack("<IIII", blob[4:20])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported token file version {version}")
    expected = 20 + 2 * levels * timesteps
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} != expected {expected}")
    tokens = np.frombuffer(blob[20:], dtype="<u2").reshape(levels, timesteps).astype(np.int32)
    if tokens.size and tokens.max() >= vocab:
        raise FormatError(f"{path}: token value outside vocab {vocab}")
    return TokenGrid(tokens=tokens, vocab=vocab)


def write_codebooks(path, books: Codebooks) -> None:
    cfg = books.config
    header = CODEBOOK_MAGIC + struct.pack(
        "<IIIIIIIBQ",
        FORMAT_VERSION,
        cfg.levels,
        cfg.entries,
        cfg.feature_dim,
        cfg.frame_size,
        cfg.sample_rate,
        cfg.kmeans_iters,
        1 if books.trained else 0,
        books.fingerprint,
    )
    data = np.ascontiguousarray(books.vectors, dtype="<f8")
    Path(path).write_bytes(header + data.tobytes())


def read_codebooks(path) -> Codebooks:
    blob = Path(path).read_bytes()
    head = 4 + struct.calcsize("<IIIIIIIBQ")
    if len(blob) < head or blob[:4] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad codebook file magic")
    (version, levels, entries, feature_dim, frame_size,
     sample_rate, kmeans_iters, trained, fingerprint) = struct.unpack("<IIIIIIIBQ", blob[4:head])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported codebook file version {version}")
    expected = head + 8 * levels * entries * feature_dim
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} != expected {expected}")
    cfg = CodecConfig(sample_rate=sample_rate, frame_size=frame_size, feature_dim=feature_dim,
                      levels=levels, entries=entries, kmeans_iters=kmeans_iters)
    vectors = np.frombuffer(blob[head:], dtype="<f8").reshape(levels, entries, feature_dim).copy()
    return Codebooks(config=cfg, vectors=vectors, trained=bool(trained), fingerprint=fingerprint)

"""Visual feature files ("VABV") and the plain-text dataset manifest."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from soundsight.codec.io import FormatError

VISUAL_MAGIC = b"VABV"
VISUAL_VERSION = 1


def write_visual(path, features: np.ndarray) -> None:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise FormatError(f"write_visual: expected (frames, dim), got {f.shape}")
    header = VISUAL_MAGIC + struct.pack("<III", VISUAL_VERSION, f.shape[0], f.shape[1])
    Path(path).write_bytes(header + np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_visual(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != VISUAL_MAGIC:
        raise FormatError(f"{path}: bad visual file magic")
    version, frames, dim = struct.unpack("<III", blob[4:16])
    if version != VISUAL_VERSION:
        raise FormatError(f"{path}: unsupported visual file version {version}")
    expected = 16 + 8 * frames * dim
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} != expected {expected}")
    return np.frombuffer(blob[16:], dtype="<f8").reshape(frames, dim).copy()


def write_manifest(path, rows: list[dict]) -> None:
    """rows: dicts with id, seed, a_factor, v_factor, wav, visual (relative paths)."""
    lines = ["# id\tseed\ta_factor\tv_factor\twav\tvisual"]
    for r in rows:
        lines.append(f"{r['id']}\t{r['seed']}\t{r['a_factor']}\t{r['v_factor']}\t{r['wav']}\t{r['visual']}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise FormatError(f"{path}: malformed manifest line {line!r}")
        rows.append({
            "id": int(parts[0]), "seed": int(parts[1]),
            "a_factor": int(parts[2]), "v_factor": int(parts[3]),
            "wav": parts[4], "visual": parts[5],
        })
    return rows

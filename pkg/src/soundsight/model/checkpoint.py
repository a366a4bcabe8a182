"""Model checkpoint file format.

Layout (little-endian):

    magic   b"VABM"
    u32     version
    u32     text block byte length
    bytes   text block: "cfg.<key>=<value>" and "meta.<key>=<value>" lines,
            newline separated, keys sorted within each prefix
    u32     parameter count
    per parameter, in the order the parameter dict iterates:
        u16  name byte length, then the utf-8 name
        u8   ndim, then ndim u32 dims
        f64  row-major data
    u32     crc32 of everything after the magic

Metadata carries string values only (stage lineage, seeds, step counts).
A corrupt or truncated file raises FormatError.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from soundsight.codec.io import FormatError
from soundsight.numerics import Tensor

from .config import config_from_fields, config_to_fields

MAGIC = b"VABM"
VERSION = 1


def _text_block(cfg, meta: dict[str, str]) -> bytes:
    lines = [f"cfg.{k}={v}" for k, v in sorted(config_to_fields(cfg).items())]
    for k in sorted(meta):
        v = str(meta[k])
        if "\n" in k or "\n" in v or "=" in k:
            raise ValueError(f"checkpoint meta entry {k!r} contains reserved characters")
        lines.append(f"meta.{k}={v}")
    return "\n".join(lines).encode("utf-8")


def save_checkpoint(path, params: dict[str, Tensor], cfg, meta: dict[str, str] | None = None) -> None:
    text = _text_block(cfg, dict(meta or {}))
    parts = [struct.pack("<II", VERSION, len(text)), text,
             struct.pack("<I", len(params))]
    for name, t in params.items():
        nb = name.encode("utf-8")
        # ascontiguousarray promotes 0-dim to 1-D, so take the shape first
        arr = np.asarray(t.data, dtype=np.float64)
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(parts)
    with open(path, "wb") as f:
        f.write(MAGIC + body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("checkpoint truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Returns (params, cfg, meta); every parameter has requires_grad=True."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    body, (stored,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != stored:
        raise FormatError(f"{path}: checksum mismatch")
    r = _Reader(body)
    version, text_len = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg_fields: dict[str, str] = {}
    meta: dict[str, str] = {}
    text = r.take(text_len).decode("utf-8")
    for line in text.splitlines():
        key, _, value = line.partition("=")
        if key.startswith("cfg."):
            cfg_fields[key[4:]] = value
        elif key.startswith("meta."):
            meta[key[5:]] = value
        else:
            raise FormatError(f"{path}: malformed header line {line!r}")
    try:
        cfg = config_from_fields(cfg_fields)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad config block ({e})") from e
    (n_params,) = r.unpack("<I")
    params: dict[str, Tensor] = {}
    for _ in range(n_params):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        count = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).copy()
        params[name] = Tensor(data, requires_grad=True)
    if r.pos != len(body):
        raise FormatError(f"{path}: trailing bytes after parameter table")
    return params, cfg, meta

"""Residual vector quantization over DCT frame features.

Per level: Lloyd k-means (k-means++ init, empty clusters reseeded to the
farthest point) fit on the residual left by earlier levels. Entry 0 of every
level is a protected zero vector, which guarantees the per-frame residual
norm never increases with depth.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from soundsight import _kernels

from .frames import frame_transform, inverse_transform


@dataclass(frozen=True)
class CodecConfig:
    """Geometry and training knobs for the RVQ codec.

    levels=4 gives the small profile; levels=12 the large one. The first
    4 levels are the "coarse" set consumed by the backbone either way.
    """

    sample_rate: int = 16000
    frame_size: int = 320
    feature_dim: int = 64
    levels: int = 4
    entries: int = 256
    kmeans_iters: int = 10

    def __post_init__(self):
        if self.sample_rate <= 0 or self.frame_size <= 0:
            raise ValueError("CodecConfig: sample_rate and frame_size must be positive")
        if not 1 <= self.feature_dim <= self.frame_size:
            raise ValueError("CodecConfig: feature_dim must be in [1, frame_size]")
        if self.levels < 1 or self.entries < 2 or self.entries > 65535:
            raise ValueError("CodecConfig: need levels >= 1 and 2 <= entries <= 65535")
        if self.kmeans_iters < 1:
            raise ValueError("CodecConfig: kmeans_iters must be >= 1")

    @property
    def frames_per_clip(self) -> int:
        # convenience for the canonical 10 s clip; general inputs may differ
        return -(-self.sample_rate * 10 // self.frame_size)


@dataclass
class TokenGrid:
    """levels x timesteps int token grid; `vocab` entries per level.

    Values lie in [0, vocab); the mask sentinel used by the model is the
    value `vocab` itself and never appears in codec output.
    """

    tokens: np.ndarray
    vocab: int

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens)
        if self.tokens.ndim != 2 or not np.issubdtype(self.tokens.dtype, np.integer):
            raise ValueError(f"TokenGrid: expected 2-D integer array, got {self.tokens.dtype} {self.tokens.shape}")
        if self.tokens.size and (self.tokens.min() < 0 or self.tokens.max() > self.vocab):
            raise ValueError(f"TokenGrid: values outside [0, {self.vocab}]")

    @property
    def levels(self) -> int:
        return self.tokens.shape[0]

    @property
    def timesteps(self) -> int:
        return self.tokens.shape[1]

    @property
    def mask_id(self) -> int:
        return self.vocab

    def has_masks(self) -> bool:
        return bool((self.tokens == self.vocab).any())


@dataclass
class Codebooks:
    """Trained per-level entry vectors plus provenance."""

    config: CodecConfig
    vectors: np.ndarray  # (levels, entries, feature_dim)
    trained: bool = False
    fingerprint: int = 0  # low 64 bits of sha256 over the training frames
    train_errors: list = field(default_factory=list, repr=False)  # per level, per iteration


def _bulk_sqdist(x: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """(n, v) squared distances via the BLAS expansion; training-path only."""
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ cb.T) + (cb * cb).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_level(resid: np.ndarray, entries: int, iters: int, rng: np.random.Generator):
    """Lloyd k-means with a protected zero entry at index 0.

    Returns (codebook (entries, d), per-iteration mean squared error list).
    The error series is measured with a fresh assignment each time, so it is
    non-increasing by the usual Lloyd argument.
    """
    n, d = resid.shape
    cb = np.zeros((entries, d), dtype=np.float64)

    # k-means++ over the free entries; the protected zero counts as chosen
    best = (resid * resid).sum(axis=1)
    for j in range(1, entries):
        total = best.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=best / total))
        cb[j] = resid[pick]
        best = np.minimum(best, ((resid - cb[j]) ** 2).sum(axis=1))

    errors = []
    for _ in range(iters):
        d2 = _bulk_sqdist(resid, cb)
        assign = np.argmin(d2, axis=1)
        errors.append(float(d2[np.arange(n), assign].mean()))
        counts = np.bincount(assign, minlength=entries)
        sums = np.zeros_like(cb)
        np.add.at(sums, assign, resid)
        nonempty = counts > 0
        nonempty[0] = False  # protected
        cb[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.flatnonzero(~nonempty & (np.arange(entries) > 0))
        if empties.size:
            far = np.argsort(_bulk_sqdist(resid, cb).min(axis=1))[::-1]
            cb[empties] = resid[far[: empties.size]]
    d2 = _bulk_sqdist(resid, cb)
    errors.append(float(d2.min(axis=1).mean()))

    # post-pass: keep entries pairwise distinct (protected zero included)
    seen = {cb[0].tobytes(): 0}
    far = None
    for j in range(1, entries):
        key = cb[j].tobytes()
        if key not in seen:
            seen[key] = j
            continue
        if far is None:
            far = list(np.argsort(_bulk_sqdist(resid, cb).min(axis=1))[::-1])
        fixed = False
        while far:
            cand = resid[far.pop(0)]
            if cand.tobytes() not in seen:
                cb[j] = cand
                fixed = True
                break
        if not fixed:
            # degenerate corpus: fall back to a tiny deterministic offset
            bump = np.zeros(d)
            bump[j % d] = 1e-12 * j
            cb[j] = cb[seen[key]] + bump
        seen[cb[j].tobytes()] = j
    return cb, errors


def train_codebooks(
    corpus: "list[np.ndarray] | np.ndarray",
    config: CodecConfig,
    seed: int = 0,
    max_frames: int | None = 100_000,
) -> Codebooks:
    """Fit all levels on a corpus of waveforms (or a prebuilt frame matrix).

    Deterministic in (corpus, config, seed). Frames beyond `max_frames` are
    dropped by seeded subsampling.
    """
    if isinstance(corpus, np.ndarray) and corpus.ndim == 2:
        feats = np.asarray(corpus, dtype=np.float64)
        if feats.shape[1] != config.feature_dim:
            raise ValueError(f"train_codebooks: frames have dim {feats.shape[1]}, config wants {config.feature_dim}")
    else:
        feats = np.concatenate(
            [frame_transform(w, config.frame_size, config.feature_dim) for w in corpus]
        )
    if feats.shape[0] < config.entries:
        raise ValueError(f"train_codebooks: {feats.shape[0]} frames < {config.entries} entries")
    root = np.random.default_rng(np.random.SeedSequence((0x5EED, seed)))
    if max_frames is not None and feats.shape[0] > max_frames:
        keep = np.sort(root.choice(feats.shape[0], size=max_frames, replace=False))
        feats = feats[keep]
    fingerprint = int.from_bytes(hashlib.sha256(np.ascontiguousarray(feats).tobytes()).digest()[:8], "big")

    vectors = np.zeros((config.levels, config.entries, config.feature_dim))
    errors = []
    resid = feats.copy()
    for level in range(config.levels):
        rng = np.random.default_rng(np.random.SeedSequence((0x5EED, seed, level)))
        cb, errs = _kmeans_level(resid, config.entries, config.kmeans_iters, rng)
        vectors[level] = cb
        errors.append(errs)
        idx, _ = _kernels.nearest_codebook(resid, cb)
        resid = resid - cb[idx]
    return Codebooks(config=config, vectors=vectors, trained=True,
                     fingerprint=fingerprint, train_errors=errors)


def encode(waveform: np.ndarray, books: Codebooks) -> TokenGrid:
    """Waveform -> token grid: per level, nearest entry on the running residual.

    Ties resolve to the lowest entry index (exhaustive-scan semantics).
    """
    if not books.trained:
        raise ValueError("encode: codebooks are untrained")
    cfg = books.config
    resid = frame_transform(waveform, cfg.frame_size, cfg.feature_dim)
    tokens = np.empty((cfg.levels, resid.shape[0]), dtype=np.int32)
    for level in range(cfg.levels):
        idx, _ = _kernels.nearest_codebook(resid, books.vectors[level])
        tokens[level] = idx
        resid = resid - books.vectors[level][idx]
    return TokenGrid(tokens=tokens, vocab=cfg.entries)


def encode_features(feats: np.ndarray, books: Codebooks) -> TokenGrid:
    """encode() starting from precomputed frame features."""
    cfg = books.config
    resid = np.array(feats, dtype=np.float64)
    tokens = np.empty((cfg.levels, resid.shape[0]), dtype=np.int32)
    for level in range(cfg.levels):
        idx, _ = _kernels.nearest_codebook(resid, books.vectors[level])
        tokens[level] = idx
        resid -= books.vectors[level][idx]
    return TokenGrid(tokens=tokens, vocab=cfg.entries)


def decode(grid: TokenGrid, books: Codebooks, levels_used: int | None = None) -> np.ndarray:
    """Sum the selected entry vectors over the first `levels_used` levels and invert."""
    cfg = books.config
    if grid.levels != cfg.levels or grid.vocab != cfg.entries:
        raise ValueError(f"decode: grid {grid.levels}x*/{grid.vocab} does not match codec "
                         f"{cfg.levels}/{cfg.entries}")
    if grid.has_masks():
        raise ValueError("decode: grid contains mask sentinels")
    n = cfg.levels if levels_used is None else levels_used
    if not 1 <= n <= cfg.levels:
        raise ValueError(f"decode: levels_used {n} outside [1, {cfg.levels}]")
    feats = np.zeros((grid.timesteps, cfg.feature_dim))
    for level in range(n):
        feats += books.vectors[level][grid.tokens[level]]
    return inverse_transform(feats, cfg.frame_size)


def recon_snr(reference: np.ndarray, test: np.ndarray) -> float:
    """10*log10(signal power / error power); inf when exact, reject silent reference."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    out = np.asarray(test, dtype=np.float64).ravel()
    n = max(ref.size, out.size)
    if ref.size < n:
        ref = np.pad(ref, (0, n - ref.size))
    if out.size < n:
        out = np.pad(out, (0, n - out.size))
    p_sig = float(ref @ ref)
    if p_sig == 0.0:
        raise ValueError("recon_snr: reference has zero power")
    err = ref - out
    p_err = float(err @ err)
    if p_err == 0.0:
        return math.inf
    return 10.0 * math.log10(p_sig / p_err)

"""Iterative parallel decoding with guidance and coarse-to-fine refinement.

The decode unit is the grid column: a masked column has every level masked,
sampling fills all levels of a column at once, and confidence ranks columns.
Per iteration the engine samples every masked column, then re-masks the k_t
lowest-confidence ones (cosine schedule), so exactly the survivors stay fixed
for the rest of the decode.

RNG draw order per iteration: sampling uniforms (levels x masked columns),
then one Gumbel uniform per masked column when the annealed temperature is
nonzero. Everything downstream of a seeded Generator is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from soundsight import _kernels as kernels
from soundsight.codec.rvq import Codebooks, CodecConfig, TokenGrid
from soundsight.codec.rvq import decode as codec_decode
from soundsight.model import C2FConfig, ModelConfig, c2f_logits, forward_logits
from soundsight.numerics import no_grad

from .schedule import anneal_alpha, remask_count


@dataclass(frozen=True)
class DecodeConfig:
    steps: int = 16
    cfg_scale: float = 5.0
    alpha0: float = 10.5
    c2f_steps: int = 36
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("DecodeConfig: steps must be >= 1")
        if self.c2f_steps < 1:
            raise ValueError("DecodeConfig: c2f_steps must be >= 1")
        if self.cfg_scale < 0:
            raise ValueError("DecodeConfig: cfg_scale must be >= 0")
        if self.alpha0 < 0:
            raise ValueError("DecodeConfig: alpha0 must be >= 0")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    masked: int        # columns still masked after this iteration's re-masking
    threshold: float   # lowest confidence among newly finalized columns (inf if none)
    finalized: int     # columns newly finalized this iteration


@dataclass
class DecodeTrace:
    rows: list[TraceRow] = field(default_factory=list)
    invocations: int = 0

    def to_tsv(self) -> str:
        lines = ["iteration\tmasked\tthreshold\tfinalized"]
        for r in self.rows:
            lines.append(f"{r.iteration}\t{r.masked}\t{r.threshold:.17g}\t{r.finalized}")
        lines.append(f"# invocations\t{self.invocations}")
        return "\n".join(lines) + "\n"


def cfg_logits(cond: np.ndarray, uncond: np.ndarray, scale: float) -> np.ndarray:
    """guided = uncond + scale * (cond - uncond); scale 1 returns cond itself."""
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ValueError(f"cfg_logits: shape mismatch {cond.shape} vs {uncond.shape}")
    if scale == 1.0:
        return cond
    return uncond + scale * (cond - uncond)


def confidence(logp: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """z = log p + alpha * Gumbel noise, one draw per position; alpha 0 adds nothing."""
    logp = np.asarray(logp, dtype=np.float64)
    if alpha == 0.0:
        return logp.copy()
    u = rng.random(logp.shape)
    u[u == 0.0] = 0.5          # rng.random() < 1 always; only u=0 would blow up
    return logp + alpha * (-np.log(-np.log(u)))


def _sample_columns(logits: np.ndarray, rng: np.random.Generator):
    """Categorical draw per (level, column) cell; returns tokens and their log-probs."""
    levels, m, vocab = logits.shape
    p = kernels.softmax_last(logits.reshape(levels * m, vocab)).reshape(logits.shape)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random((levels, m))
    tok = np.minimum((u[..., None] >= cdf).sum(axis=-1), vocab - 1)
    picked = np.take_along_axis(p, tok[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        logp = np.log(picked)
    return tok.astype(np.int64), logp


def decode_grid(logits_fn, levels: int, columns: int, vocab: int, steps: int,
                alpha0: float, rng: np.random.Generator):
    """Generic decode engine.

    logits_fn(grid (levels, columns) with mask sentinels) -> (logits ndarray
    (levels, columns, vocab), model invocations consumed). Returns the finished
    grid and a DecodeTrace.
    """
    mask_id = vocab
    grid = np.full((levels, columns), mask_id, dtype=np.int64)
    masked = np.ones(columns, dtype=bool)
    trace = DecodeTrace()
    for t in range(steps):
        logits, ninv = logits_fn(grid)
        trace.invocations += int(ninv)
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape != (levels, columns, vocab):
            raise ValueError(f"decode_grid: logits_fn returned {logits.shape}, "
                             f"expected {(levels, columns, vocab)}")
        cols = np.flatnonzero(masked)
        tok, logp = _sample_columns(logits[:, cols, :], rng)
        grid[:, cols] = tok
        z = confidence(logp.mean(axis=0), anneal_alpha(t, steps, alpha0), rng)
        k = remask_count(t, steps, columns)
        if k > cols.size:
            raise RuntimeError(f"decode_grid: schedule wants {k} re-masks "
                               f"with only {cols.size} masked columns")
        order = np.argsort(z, kind="stable")
        threshold = float(z[order[k]]) if k < cols.size else float("inf")
        grid[:, cols[order[:k]]] = mask_id
        masked[cols[order[k:]]] = False
        trace.rows.append(TraceRow(t, int(masked.sum()), threshold, cols.size - k))
    if masked.any():
        raise RuntimeError(f"decode_grid: {int(masked.sum())} columns still masked "
                           f"after {steps} iterations; trace:\n{trace.to_tsv()}")
    return grid, trace


def model_logits_fn(params: dict, cfg: ModelConfig, visual: np.ndarray, scale: float):
    """Backbone logits with guidance: 2 forwards per call unless scale is 1."""
    visual = np.asarray(visual, dtype=np.float64)

    def fn(grid):
        with no_grad():
            cond = forward_logits(params, cfg, grid, visual).data
            if scale == 1.0:
                return cond, 1
            uncond = forward_logits(params, cfg, grid, visual,
                                    null_flags=np.asarray(True)).data
        return cfg_logits(cond, uncond, scale), 2
    return fn


def c2f_logits_fn(params: dict, cfg: C2FConfig, coarse: np.ndarray,
                  visual: np.ndarray, scale: float):
    """Fine-level logits with the coarse block held fixed as conditioning."""
    visual = np.asarray(visual, dtype=np.float64)
    coarse = np.asarray(coarse, dtype=np.int64)

    def fn(fine_grid):
        full = np.concatenate([coarse, fine_grid], axis=0)
        with no_grad():
            cond = c2f_logits(params, cfg, full, visual).data
            if scale == 1.0:
                return cond, 1
            uncond = c2f_logits(params, cfg, full, visual,
                                null_flags=np.asarray(True)).data
        return cfg_logits(cond, uncond, scale), 2
    return fn


def iterative_decode(params: dict, cfg: ModelConfig, visual, dcfg: DecodeConfig,
                     columns: int, rng: np.random.Generator | None = None):
    """Visual features -> coarse TokenGrid via masked parallel decoding."""
    if rng is None:
        rng = np.random.default_rng(dcfg.seed)
    fn = model_logits_fn(params, cfg, visual, dcfg.cfg_scale)
    grid, trace = decode_grid(fn, cfg.coarse_levels, columns, cfg.vocab,
                              dcfg.steps, dcfg.alpha0, rng)
    return TokenGrid(grid, cfg.vocab), trace


def coarse_to_fine(coarse: TokenGrid, visual, params: dict, cfg: C2FConfig,
                   dcfg: DecodeConfig, rng: np.random.Generator | None = None):
    """Fill levels coarse_levels..total_levels-1; the coarse block is read-only."""
    if coarse.has_masks():
        raise ValueError("coarse_to_fine: coarse grid contains masks")
    if coarse.levels != cfg.coarse_levels:
        raise ValueError(f"coarse_to_fine: got {coarse.levels} coarse levels, "
                         f"model expects {cfg.coarse_levels}")
    if rng is None:
        rng = np.random.default_rng(dcfg.seed)
    fn = c2f_logits_fn(params, cfg, coarse.tokens, visual, dcfg.cfg_scale)
    fine, trace = decode_grid(fn, cfg.fine_levels, coarse.timesteps, cfg.vocab,
                              dcfg.c2f_steps, dcfg.alpha0, rng)
    full = np.concatenate([coarse.tokens, fine], axis=0)
    return TokenGrid(full, cfg.vocab), trace


def generate(visual, books: Codebooks, params: dict, cfg: ModelConfig,
             dcfg: DecodeConfig, c2f: tuple[dict, C2FConfig] | None = None):
    """Visual features -> waveform. Returns (waveform, grid, traces).

    Column count follows the codec frame rate at 1 visual frame per second.
    A codec with more levels than the backbone's coarse block needs the c2f
    stage supplied.
    """
    ccfg: CodecConfig = books.config
    columns = cfg.visual_frames * (ccfg.sample_rate // ccfg.frame_size)
    rng = np.random.default_rng(dcfg.seed)
    grid, trace = iterative_decode(params, cfg, visual, dcfg, columns, rng)
    traces = [trace]
    if ccfg.levels > cfg.coarse_levels:
        if c2f is None:
            raise ValueError(f"generate: codec has {ccfg.levels} levels but the "
                             f"backbone models {cfg.coarse_levels}; a coarse-to-fine "
                             "checkpoint is required")
        c2f_params, c2f_cfg = c2f
        if c2f_cfg.total_levels != ccfg.levels:
            raise ValueError("generate: coarse-to-fine model and codec level counts differ")
        grid, trace2 = coarse_to_fine(grid, visual, c2f_params, c2f_cfg, dcfg, rng)
        traces.append(trace2)
    waveform = codec_decode(grid, books)
    return waveform, grid, traces

"""Inference ablation sweeps: guidance scale, Gumbel temperature, decode steps.

Each cell generates a small eval set of coarse grids, scores them with the
frozen probe (distribution distance against the reference set, per-pair KL),
and records invocation counts and wall-clock. Cells run across worker threads
against read-only checkpoints; metric and invocation columns are bitwise
reproducible from (config id, seed) regardless of worker count, wall-clock
is not.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from hashlib import sha256

import numpy as np

from soundsight.metrics import frechet_distance, kld_metric
from soundsight.model import ModelConfig
from soundsight.sampling import DecodeConfig, iterative_decode

AXES: dict[str, tuple] = {
    "cfg_scale": (1.0, 3.0, 5.0, 7.0, 11.0),
    "alpha0": (4.5, 10.5, 12.5, 15.5, 20.5, 25.5),
    "steps": (8, 16, 36, 48),
}

_CLIP_TAG = 0xBE9C


@dataclass(frozen=True)
class BenchRow:
    config_id: str
    fad: float
    kld: float
    invocations: int
    wall_clock: float
    seed: int


def _fmt(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def bench_cells(axes: list[str]) -> list[dict]:
    """Cartesian product over the requested axes' value grids."""
    for a in axes:
        if a not in AXES:
            raise ValueError(f"bench_cells: unknown axis {a!r}; have {sorted(AXES)}")
    if not axes:
        raise ValueError("bench_cells: need at least one axis")
    cells = []
    for combo in itertools.product(*[AXES[a] for a in axes]):
        cells.append(dict(zip(axes, combo)))
    return cells


def generate_eval_set(params: dict, mcfg: ModelConfig, visual: np.ndarray,
                      dcfg: DecodeConfig, columns: int, items: int):
    """items coarse grids, one per visual row; per-clip rng keyed by (seed, clip)."""
    grids = []
    invocations = 0
    for i in range(items):
        rng = np.random.default_rng(np.random.SeedSequence((dcfg.seed, _CLIP_TAG, i)))
        grid, trace = iterative_decode(params, mcfg, visual[i], dcfg, columns, rng)
        grids.append(grid.tokens)
        invocations += trace.invocations
    return np.stack(grids), invocations


def bench(params: dict, mcfg: ModelConfig, eval_visual: np.ndarray,
          ref_tokens: np.ndarray, embed_fn, dist_fn, axes: list[str],
          seeds: list[int], base: DecodeConfig, columns: int,
          eval_items: int = 8, workers: int = 1) -> list[BenchRow]:
    """Sweep the requested axes; one row per (cell, seed), in grid order.

    embed_fn(tokens (n, L, S)) -> (n, d) metric embeddings; dist_fn likewise
    returns (n, classes) probe distributions. ref_tokens holds the reference
    grids; the first eval_items of them are the paired references for KL.
    """
    if eval_items < 2:
        raise ValueError("bench: eval_items must be >= 2 for covariance fits")
    if eval_visual.shape[0] < eval_items or ref_tokens.shape[0] < eval_items:
        raise ValueError("bench: eval set smaller than eval_items")
    if workers < 1:
        raise ValueError("bench: workers must be >= 1")
    ref_emb = embed_fn(ref_tokens)
    ref_dists = dist_fn(ref_tokens[:eval_items])

    work = [(cell, seed) for cell in bench_cells(axes) for seed in seeds]

    def run_row(item) -> BenchRow:
        cell, seed = item
        config_id = ",".join(f"{k}={_fmt(v)}" for k, v in cell.items())
        dcfg = replace(base, seed=seed, **cell)
        t0 = time.perf_counter()
        gen_tokens, invocations = generate_eval_set(
            params, mcfg, eval_visual, dcfg, columns, eval_items)
        wall = time.perf_counter() - t0
        fad = frechet_distance(ref_emb, embed_fn(gen_tokens))
        kld = kld_metric(ref_dists, dist_fn(gen_tokens))
        return BenchRow(config_id, fad, kld, invocations, wall, seed)

    if workers == 1:
        return [run_row(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so rows stay in grid order
        return list(pool.map(run_row, work))


def report_tsv(rows: list[BenchRow]) -> str:
    lines = ["config_id\tfad\tkld\tinvocations\twall_clock\tseed"]
    for r in rows:
        lines.append(f"{r.config_id}\t{r.fad!r}\t{r.kld!r}\t{r.invocations}"
                     f"\t{r.wall_clock:.3f}\t{r.seed}")
    return "\n".join(lines) + "\n"


def rows_fingerprint(rows: list[BenchRow]) -> str:
    """Digest over everything except wall-clock; equal for identical reruns."""
    h = sha256()
    for r in rows:
        h.update(f"{r.config_id}|{r.fad!r}|{r.kld!r}|{r.invocations}|{r.seed}\n"
                 .encode())
    return h.hexdigest()

"""Command-line entry point binding every pipeline stage.

Each subcommand reads a config file plus --set overrides, rebuilds the
synthetic corpus deterministically from the data.* keys, and writes its
artifacts plus a manifest (command, config hash, seed, git describe, version)
under --out. Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from soundsight import __version__
from soundsight.codec import (
    Codebooks,
    decode as codec_decode,
    encode as codec_encode,
    read_codebooks,
    read_tokens,
    train_codebooks,
    write_codebooks,
    write_tokens,
    write_wav,
)
from soundsight.codec.io import FormatError
from soundsight.configfile import (
    ConfigError,
    bench_axes,
    bench_seeds,
    c2f_config,
    codec_config,
    config_hash,
    dataset_config,
    decode_config,
    load_config,
    model_config,
    render_defaults,
    train_config,
)
from soundsight.bench import bench as run_bench, report_tsv, rows_fingerprint
from soundsight.data import build_dataset, split_indices, write_manifest, write_visual
from soundsight.metrics import frechet_distance, kld_metric, retrieval_eval
from soundsight.model import C2FConfig, ModelConfig, load_checkpoint, save_checkpoint
from soundsight.sampling import generate as sample_generate
from soundsight.train import (
    audio_reps_from_tokens,
    classify_finetune,
    encode_dataset,
    linear_probe,
    modal_reps,
    probe_distributions,
    run_contrastive,
    run_c2f,
    run_pretrain,
)
from soundsight.numerics import no_grad

BOOKS = "books.vabc"
BACKBONE = "backbone.vabm"
C2F = "c2f.vabm"
CONTRASTIVE = "contrastive.vabm"
CLASSIFY = "classify.vabm"
PROBE = "probe.vabm"

_HEAD_KEYS = ("head_w", "head_b")

_SEED_KEY = {
    "codec-train": "codec.seed", "codec-eval": "codec.seed",
    "datagen": "data.master_seed", "pretrain": "pretrain.seed",
    "c2f-train": "c2ftrain.seed", "finetune-contrastive": "contrastive.seed",
    "finetune-classify": "classify.seed", "probe-train": "probe.seed",
    "generate": "decode.seed", "retrieve": "data.master_seed",
    "evaluate": "data.master_seed", "bench": "decode.seed",
}


def _git_describe() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty"],
                           cwd=Path(__file__).parent, capture_output=True,
                           text=True, timeout=10)
        if r.returncode == 0 and r.stdout.strip():
            return r.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_run_manifest(out: Path, command: str, cfg: dict) -> Path:
    path = out / f"manifest-{command}.txt"
    lines = [
        f"command={command}",
        f"config_hash={config_hash(cfg)}",
        f"seed={cfg[_SEED_KEY[command]]}",
        f"git={_git_describe()}",
        f"version={__version__}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing stage dependency: {path} (run '{stage}' first)")
    return path


def _corpus(cfg: dict):
    dcfg = dataset_config(cfg)
    samples = build_dataset(dcfg)
    train, val, test = split_indices(dcfg, len(samples),
                                     cfg["data.val_fraction"],
                                     cfg["data.test_fraction"])
    return dcfg, samples, {"train": train, "val": val, "test": test}


def _encoded_split(cfg: dict, books: Codebooks, split: str):
    dcfg, samples, splits = _corpus(cfg)
    if split not in splits:
        raise ConfigError(f"config: unknown split {split!r}; have train, val, test")
    idx = splits[split]
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty under the current fractions")
    full = encode_dataset(samples, books, dcfg)
    return dcfg, full.subset(idx)


def _labels_for(ds, dcfg, target: str):
    if target == "composite":
        return ds.labels, dcfg.classes
    if target == "audio":
        return ds.a_factor, dcfg.audio_factors
    if target == "visual":
        return ds.v_factor, dcfg.visual_factors
    raise ConfigError(f"config: unknown label target {target!r}; "
                      "have composite, audio, visual")


def _load_backbone(path: Path):
    params, mcfg, meta = load_checkpoint(path)
    if not isinstance(mcfg, ModelConfig):
        raise FormatError(f"{path}: expected a backbone checkpoint, found "
                          f"{type(mcfg).__name__}")
    return params, mcfg, meta


def _load_with_head(path: Path):
    params, mcfg, meta = _load_backbone(path)
    head = {}
    for k in _HEAD_KEYS:
        if k not in params:
            raise FormatError(f"{path}: checkpoint is missing the {k!r} head parameter")
        head[k] = params.pop(k)
    return params, head, mcfg, meta


def _derived_seed(base: int, i: int) -> int:
    return int(np.random.SeedSequence((base, 0xC11D, i)).generate_state(1)[0])


def cmd_codec_train(cfg: dict, out: Path) -> None:
    ccfg = codec_config(cfg)
    _, samples, splits = _corpus(cfg)
    waves = [samples[int(i)].waveform for i in splits["train"]]
    books = train_codebooks(waves, ccfg, seed=cfg["codec.seed"],
                            max_frames=cfg["codec.max_frames"])
    write_codebooks(out / BOOKS, books)
    print(f"trained {ccfg.levels}-level codec ({ccfg.entries} entries/level) "
          f"on {len(waves)} clips -> {out / BOOKS}")


def cmd_codec_eval(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    _, samples, splits = _corpus(cfg)
    waves = [samples[int(i)].waveform for i in splits["test"]]
    if not waves:
        raise ValueError("codec-eval: test split is empty")
    grids = [codec_encode(w, books) for w in waves]
    lines = ["levels_used\tmse\tsnr_db"]
    for used in range(1, books.config.levels + 1):
        errs, snrs = [], []
        for w, g in zip(waves, grids):
            recon = codec_decode(g, books, levels_used=used)
            n = min(len(w), len(recon))
            err = w[:n] - recon[:n]
            mse = float(np.mean(err * err))
            errs.append(mse)
            power = float(np.mean(w[:n] * w[:n]))
            snrs.append(10.0 * np.log10(power / max(mse, 1e-300)))
        lines.append(f"{used}\t{float(np.mean(errs))!r}\t{float(np.mean(snrs)):.3f}")
    report = "\n".join(lines) + "\n"
    (out / "codec_eval.tsv").write_text(report)
    print(report, end="")
    print(f"wrote {out / 'codec_eval.tsv'}")


def cmd_datagen(cfg: dict, out: Path) -> None:
    dcfg, samples, splits = _corpus(cfg)
    member = {}
    for name, idx in splits.items():
        for i in idx:
            member[int(i)] = name
    rows = []
    for i, s in enumerate(samples):
        wav = f"clip_{i:04d}.wav"
        vis = f"clip_{i:04d}.vabv"
        write_wav(out / wav, s.waveform, dcfg.sample_rate)
        write_visual(out / vis, s.visual)
        rows.append({"id": i, "seed": s.seed, "a_factor": s.a_factor,
                     "v_factor": s.v_factor, "wav": wav, "visual": vis})
    write_manifest(out / "dataset.tsv", rows)
    counts = {name: len(idx) for name, idx in splits.items()}
    (out / "splits.tsv").write_text(
        "# id\tsplit\n" + "\n".join(f"{i}\t{member[i]}" for i in range(len(samples))) + "\n")
    print(f"wrote {len(samples)} clips ({counts}) to {out}")


def cmd_pretrain(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    mcfg = model_config(cfg)
    tcfg = train_config(cfg, "pretrain")
    _, train_ds = _encoded_split(cfg, books, "train")
    _, val_ds = _encoded_split(cfg, books, "val")
    train_ds = train_ds.coarse(mcfg.coarse_levels)
    val_ds = val_ds.coarse(mcfg.coarse_levels)
    params, _, history = run_pretrain(train_ds, val_ds, mcfg, tcfg)
    val_ce = history["val"][-1][1] if history["val"] else float("nan")
    save_checkpoint(out / BACKBONE, params, mcfg,
                    {"stage": "pretrain", "seed": str(tcfg.seed),
                     "val_ce": f"{val_ce!r}"})
    print(f"pretrained {len(history['train'])} steps; final val masked CE "
          f"{val_ce:.4f} -> {out / BACKBONE}")


def cmd_c2f_train(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    ccfg = c2f_config(cfg)
    if books.config.levels != ccfg.total_levels:
        raise ValueError(f"c2f-train: codec has {books.config.levels} levels, "
                         f"the refiner needs {ccfg.total_levels}")
    tcfg = train_config(cfg, "c2ftrain")
    _, train_ds = _encoded_split(cfg, books, "train")
    params, _, history = run_c2f(train_ds, ccfg, tcfg)
    save_checkpoint(out / C2F, params, ccfg,
                    {"stage": "c2f", "seed": str(tcfg.seed)})
    print(f"trained coarse-to-fine refiner {len(history['train'])} steps "
          f"-> {out / C2F}")


def cmd_finetune_contrastive(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / BACKBONE, "pretrain"))
    tcfg = train_config(cfg, "contrastive")
    _, train_ds = _encoded_split(cfg, books, "train")
    train_ds = train_ds.coarse(mcfg.coarse_levels)
    params, state, _, history = run_contrastive(train_ds, mcfg, tcfg, params)
    save_checkpoint(out / CONTRASTIVE, params, mcfg,
                    {"stage": "contrastive", "seed": str(tcfg.seed),
                     "tau": f"{state.tau!r}"})
    print(f"contrastive finetune {len(history['train'])} steps; "
          f"final temperature {state.tau:.4f} -> {out / CONTRASTIVE}")


def cmd_finetune_classify(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / BACKBONE, "pretrain"))
    tcfg = train_config(cfg, "classify")
    mode, target = cfg["classify.mode"], cfg["classify.target"]
    dcfg, train_ds = _encoded_split(cfg, books, "train")
    _, val_ds = _encoded_split(cfg, books, "val")
    train_ds = train_ds.coarse(mcfg.coarse_levels)
    val_ds = val_ds.coarse(mcfg.coarse_levels)
    train_labels, n_classes = _labels_for(train_ds, dcfg, target)
    val_labels, _ = _labels_for(val_ds, dcfg, target)
    params, head, val_acc, _ = classify_finetune(
        train_ds, train_labels, val_ds, val_labels, mcfg, tcfg, params,
        mode, n_classes)
    save_checkpoint(out / CLASSIFY, {**params, **head}, mcfg,
                    {"stage": "classify", "mode": mode, "target": target,
                     "n_classes": str(n_classes), "seed": str(tcfg.seed),
                     "val_acc": f"{val_acc!r}"})
    print(f"classifier finetune ({mode}, {target}): val accuracy {val_acc:.4f} "
          f"-> {out / CLASSIFY}")


def cmd_probe_train(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / BACKBONE, "pretrain"))
    tcfg = train_config(cfg, "probe")
    mode, target = cfg["probe.mode"], cfg["probe.target"]
    dcfg, train_ds = _encoded_split(cfg, books, "train")
    _, val_ds = _encoded_split(cfg, books, "val")
    train_ds = train_ds.coarse(mcfg.coarse_levels)
    val_ds = val_ds.coarse(mcfg.coarse_levels)
    train_labels, n_classes = _labels_for(train_ds, dcfg, target)
    val_labels, _ = _labels_for(val_ds, dcfg, target)
    head, val_acc, _ = linear_probe(train_ds, train_labels, val_ds, val_labels,
                                    mcfg, tcfg, params, mode, n_classes)
    save_checkpoint(out / PROBE, {**params, **head}, mcfg,
                    {"stage": "probe", "mode": mode, "target": target,
                     "n_classes": str(n_classes), "seed": str(tcfg.seed),
                     "val_acc": f"{val_acc!r}"})
    print(f"linear probe ({mode}, {target}): val accuracy {val_acc:.4f} "
          f"-> {out / PROBE}")


def _c2f_stage(cfg: dict, out: Path, books: Codebooks, mcfg: ModelConfig):
    """The (params, config) pair for the refiner when the codec needs one."""
    if books.config.levels <= mcfg.coarse_levels:
        return None
    c2f_params, ccfg, _ = load_checkpoint(_require(out / C2F, "c2f-train"))
    if not isinstance(ccfg, C2FConfig):
        raise FormatError(f"{out / C2F}: expected a coarse-to-fine checkpoint")
    return c2f_params, ccfg


def cmd_generate(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / BACKBONE, "pretrain"))
    c2f = _c2f_stage(cfg, out, books, mcfg)
    base = decode_config(cfg)
    _, ds = _encoded_split(cfg, books, cfg["decode.split"])
    count = min(cfg["decode.count"], ds.n)
    if count < 1:
        raise ValueError("generate: decode.count must be >= 1")
    for i in range(count):
        dcfg = replace(base, seed=_derived_seed(base.seed, i))
        wave, grid, traces = sample_generate(ds.visual[i], books, params, mcfg,
                                             dcfg, c2f)
        write_wav(out / f"gen_{i:04d}.wav", wave, books.config.sample_rate)
        write_tokens(out / f"gen_{i:04d}.vabt", grid)
        trace_text = "".join(t.to_tsv() for t in traces)
        (out / f"gen_{i:04d}.trace.tsv").write_text(trace_text)
        inv = sum(t.invocations for t in traces)
        print(f"gen_{i:04d}.wav: {len(wave)} samples, {inv} forward passes")
    print(f"wrote {count} clips to {out}")


def cmd_retrieve(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / CONTRASTIVE,
                                              "finetune-contrastive"))
    _, ds = _encoded_split(cfg, books, cfg["retrieve.split"])
    ds = ds.coarse(mcfg.coarse_levels)
    a_chunks, v_chunks = [], []
    with no_grad():
        for start in range(0, ds.n, 16):
            idx = np.arange(start, min(start + 16, ds.n))
            a, v = modal_reps(params, mcfg, ds.tokens[idx], ds.visual[idx])
            a_chunks.append(a.data)
            v_chunks.append(v.data)
    ks = tuple(k for k in (1, 5, 10) if k <= ds.n)
    result = retrieval_eval(np.concatenate(a_chunks), np.concatenate(v_chunks), ks=ks)
    lines = ["direction\tR@1\tR@5\tR@10"]
    for direction in ("v2a", "a2v"):
        r = result[direction]
        cells = [f"{r[k]:.4f}" if k in r else "n/a" for k in (1, 5, 10)]
        lines.append(direction + "\t" + "\t".join(cells))
    report = "\n".join(lines) + "\n"
    (out / "retrieval.tsv").write_text(report)
    print(report, end="")
    print(f"wrote {out / 'retrieval.tsv'}")


def _read_generated_tokens(path: Path, coarse_levels: int) -> np.ndarray:
    files = sorted(path.glob("*.vabt"))
    if not files:
        raise ValueError(f"evaluate: no .vabt token files under {path}")
    grids = []
    for f in files:
        g = read_tokens(f)
        if g.levels < coarse_levels:
            raise ValueError(f"{f}: has {g.levels} levels, need >= {coarse_levels}")
        grids.append(g.tokens[:coarse_levels])
    return np.stack(grids)


def cmd_evaluate(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, head, mcfg, meta = _load_with_head(_require(out / PROBE, "probe-train"))
    if meta.get("mode") != "a":
        raise ValueError("evaluate: needs an audio-only probe (probe.mode=a)")
    _, ds = _encoded_split(cfg, books, cfg["evaluate.split"])
    ds = ds.coarse(mcfg.coarse_levels)
    gen_dir = cfg["evaluate.generated"]
    if gen_dir:
        gen_tokens = _read_generated_tokens(Path(gen_dir), mcfg.coarse_levels)
    else:
        gen_tokens = ds.tokens
    if gen_tokens.shape[0] > ds.n:
        raise ValueError(f"evaluate: {gen_tokens.shape[0]} generated clips but "
                         f"only {ds.n} references")
    ref_pair = ds.tokens[:gen_tokens.shape[0]]
    fad = frechet_distance(audio_reps_from_tokens(params, mcfg, ds.tokens),
                           audio_reps_from_tokens(params, mcfg, gen_tokens))
    kld = kld_metric(probe_distributions(params, head, mcfg, ref_pair),
                     probe_distributions(params, head, mcfg, gen_tokens))
    report = f"fad={fad!r}\nkld={kld!r}\nn_generated={gen_tokens.shape[0]}\n"
    (out / "evaluate.txt").write_text(report)
    print(report, end="")
    print(f"wrote {out / 'evaluate.txt'}")


def cmd_bench(cfg: dict, out: Path) -> None:
    books = read_codebooks(_require(out / BOOKS, "codec-train"))
    params, mcfg, _ = _load_backbone(_require(out / BACKBONE, "pretrain"))
    p_params, head, p_mcfg, meta = _load_with_head(_require(out / PROBE, "probe-train"))
    if meta.get("mode") != "a":
        raise ValueError("bench: needs an audio-only probe (probe.mode=a)")
    _, ds = _encoded_split(cfg, books, cfg["bench.split"])
    ds = ds.coarse(mcfg.coarse_levels)
    items = min(cfg["bench.eval_items"], ds.n)
    columns = mcfg.visual_frames * (books.config.sample_rate // books.config.frame_size)

    def embed_fn(tokens: np.ndarray) -> np.ndarray:
        return audio_reps_from_tokens(p_params, p_mcfg, tokens)

    def dist_fn(tokens: np.ndarray) -> np.ndarray:
        return probe_distributions(p_params, head, p_mcfg, tokens)

    rows = run_bench(params, mcfg, ds.visual, ds.tokens, embed_fn, dist_fn,
                     bench_axes(cfg), bench_seeds(cfg), decode_config(cfg),
                     columns, eval_items=items, workers=cfg["bench.workers"])
    report = report_tsv(rows)
    (out / "bench.tsv").write_text(report)
    print(report, end="")
    print(f"fingerprint={rows_fingerprint(rows)}")
    print(f"wrote {out / 'bench.tsv'}")


_COMMANDS = {
    "codec-train": cmd_codec_train,
    "codec-eval": cmd_codec_eval,
    "datagen": cmd_datagen,
    "pretrain": cmd_pretrain,
    "c2f-train": cmd_c2f_train,
    "finetune-contrastive": cmd_finetune_contrastive,
    "finetune-classify": cmd_finetune_classify,
    "probe-train": cmd_probe_train,
    "generate": cmd_generate,
    "retrieve": cmd_retrieve,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundsight",
        description="Visual-conditioned audio generation on synthetic paired data.",
        epilog=render_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", default="out", help="artifact directory (default: out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse uses status 2 for usage errors; those are validation failures
        return 0 if e.code == 0 else 1
    try:
        cfg = load_config(args.config, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, out)
        manifest = _write_run_manifest(out, args.command, cfg)
        print(f"manifest: {manifest}")
        return 0
    except (ConfigError, FormatError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

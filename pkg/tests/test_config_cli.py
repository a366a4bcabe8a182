"""Config file parsing, typed overrides, and the command-line pipeline."""

import numpy as np
import pytest

from soundsight.cli import main
from soundsight.configfile import (
    DEFAULTS,
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

# tiny end-to-end settings shared by the CLI tests
TINY = [
    "data.duration=2.0", "data.pairs_per_class=1", "codec.levels=4",
    "codec.entries=16", "codec.kmeans_iters=2", "model.d_emb=16",
    "model.layers=2", "model.expert_layers=1", "model.heads=2",
    "model.ffn_mult=2", "pretrain.steps=3", "pretrain.warmup_steps=1",
    "pretrain.batch_size=4", "pretrain.eval_every=2",
]


def _sets(extra=()):
    out = []
    for kv in list(TINY) + list(extra):
        out += ["--set", kv]
    return out


# ---------------------------------------------------------------- parsing

def test_defaults_returned_untouched():
    cfg = load_config()
    assert cfg == DEFAULTS
    assert cfg is not DEFAULTS


def test_file_then_overrides_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text(
        "# comment line\n"
        "\n"
        "data.duration = 4.0   # trailing comment\n"
        "pretrain.steps=77\n")
    cfg = load_config(f)
    assert cfg["data.duration"] == 4.0
    assert cfg["pretrain.steps"] == 77
    cfg = load_config(f, overrides=["data.duration=6.0"])
    assert cfg["data.duration"] == 6.0


def test_unknown_key_rejected(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("data.nonsense=1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(f)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(overrides=["who.knows=2"])


def test_malformed_lines_rejected(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("data.duration\n")
    with pytest.raises(ConfigError, match="key=value"):
        load_config(f)
    with pytest.raises(ConfigError, match="key=value"):
        load_config(overrides=["data.duration"])


def test_values_parsed_by_default_type():
    cfg = load_config(overrides=["pretrain.steps=12", "data.duration=3.5",
                                 "contrastive.symmetric=false", "decode.split=val"])
    assert cfg["pretrain.steps"] == 12 and isinstance(cfg["pretrain.steps"], int)
    assert cfg["data.duration"] == 3.5
    assert cfg["contrastive.symmetric"] is False
    assert cfg["decode.split"] == "val"
    for truthy in ("true", "1", "yes", "on"):
        assert load_config(overrides=[f"contrastive.symmetric={truthy}"])[
            "contrastive.symmetric"] is True


def test_bad_values_name_expected_type():
    with pytest.raises(ConfigError, match="int"):
        load_config(overrides=["pretrain.steps=many"])
    with pytest.raises(ConfigError, match="float"):
        load_config(overrides=["data.duration=long"])
    with pytest.raises(ConfigError, match="bool"):
        load_config(overrides=["contrastive.symmetric=maybe"])


def test_config_hash_tracks_values_not_order():
    a = load_config()
    b = dict(reversed(list(load_config().items())))
    assert config_hash(a) == config_hash(b)
    c = load_config(overrides=["pretrain.steps=5"])
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 64


def test_render_defaults_lists_every_key():
    text = render_defaults()
    for key in DEFAULTS:
        assert key in text


# ---------------------------------------------------------------- builders

def test_dataset_and_codec_builders():
    cfg = load_config(overrides=["data.duration=2.0", "codec.levels=6"])
    d = dataset_config(cfg)
    assert d.duration == 2.0 and d.pairs_per_class == 8
    c = codec_config(cfg)
    assert c.levels == 6 and c.sample_rate == cfg["data.sample_rate"]


def test_model_builder_caps_coarse_levels():
    cfg = load_config(overrides=["codec.levels=12", "data.duration=4.0"])
    m = model_config(cfg)
    assert m.coarse_levels == 4
    assert m.vocab == cfg["codec.entries"]
    assert m.visual_frames == 4
    shallow = load_config(overrides=["codec.levels=2"])
    assert model_config(shallow).coarse_levels == 2


def test_c2f_builder_requires_fine_levels():
    cfg = load_config(overrides=["codec.levels=12"])
    c = c2f_config(cfg)
    assert c.total_levels == 12 and c.coarse_levels == 4
    with pytest.raises(ConfigError, match="levels"):
        c2f_config(load_config(overrides=["codec.levels=4"]))


def test_train_builder_namespaces():
    cfg = load_config(overrides=["pretrain.steps=42", "contrastive.symmetric=false"])
    t = train_config(cfg, "pretrain")
    assert t.steps == 42
    ct = train_config(cfg, "contrastive")
    assert ct.contrastive_symmetric is False
    assert ct.base_lr == 1e-4


def test_decode_and_bench_builders():
    cfg = load_config(overrides=["decode.steps=8", "bench.axes=steps, alpha0",
                                 "bench.seeds=3,5"])
    assert decode_config(cfg).steps == 8
    assert bench_axes(cfg) == ["steps", "alpha0"]
    assert bench_seeds(cfg) == [3, 5]
    with pytest.raises(ConfigError):
        bench_axes(load_config(overrides=["bench.axes=,"]))
    with pytest.raises(ConfigError):
        bench_seeds(load_config(overrides=["bench.seeds=three"]))


# ---------------------------------------------------------------- CLI

def test_cli_usage_errors_and_help(capsys):
    assert main(["no-such-command"]) == 1
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert "configuration keys" in out


def test_cli_unknown_config_key_is_validation_error(tmp_path, capsys):
    rc = main(["datagen", "--out", str(tmp_path), "--set", "bogus.key=1"])
    assert rc == 1
    assert "unknown key" in capsys.readouterr().err


def test_cli_missing_dependency_is_validation_error(tmp_path, capsys):
    rc = main(["pretrain", "--out", str(tmp_path)] + _sets())
    assert rc == 1
    assert "codec-train" in capsys.readouterr().err


def test_cli_unwritable_out_is_runtime_failure(tmp_path, capsys):
    blocker = tmp_path / "occupied"
    blocker.write_text("a file, not a directory\n")
    rc = main(["datagen", "--out", str(blocker)] + _sets())
    assert rc == 2
    assert "runtime failure" in capsys.readouterr().err


def test_cli_pipeline_stages(tmp_path, capsys):
    out = str(tmp_path)

    assert main(["datagen", "--out", out] + _sets()) == 0
    text = capsys.readouterr().out
    assert "wrote 16 clips" in text
    assert (tmp_path / "dataset.tsv").exists()
    assert (tmp_path / "splits.tsv").exists()
    assert (tmp_path / "clip_0000.wav").exists()
    assert (tmp_path / "clip_0015.vabv").exists()

    manifest = (tmp_path / "manifest-datagen.txt").read_text().strip().split("\n")
    fields = dict(line.split("=", 1) for line in manifest)
    assert fields["command"] == "datagen"
    assert len(fields["config_hash"]) == 64
    assert fields["seed"] == "0"
    assert set(fields) == {"command", "config_hash", "seed", "git", "version"}

    assert main(["codec-train", "--out", out] + _sets()) == 0
    assert (tmp_path / "books.vabc").exists()
    capsys.readouterr()

    assert main(["codec-eval", "--out", out] + _sets()) == 0
    eval_lines = (tmp_path / "codec_eval.tsv").read_text().strip().split("\n")
    assert eval_lines[0] == "levels_used\tmse\tsnr_db"
    assert len(eval_lines) == 1 + 4
    mses = [float(line.split("\t")[1]) for line in eval_lines[1:]]
    assert all(a >= b for a, b in zip(mses, mses[1:]))
    capsys.readouterr()

    assert main(["pretrain", "--out", out] + _sets()) == 0
    assert (tmp_path / "backbone.vabm").exists()
    assert "val masked CE" in capsys.readouterr().out

    assert main(["generate", "--out", out]
                + _sets(["decode.steps=2", "decode.count=1"])) == 0
    text = capsys.readouterr().out
    assert (tmp_path / "gen_0000.wav").exists()
    assert (tmp_path / "gen_0000.vabt").exists()
    trace = (tmp_path / "gen_0000.trace.tsv").read_text()
    assert trace.startswith("iteration\t")
    assert "forward passes" in text

    # 2 s of audio at 50 frames/s and 320 samples/frame
    from soundsight.codec import read_tokens
    grid = read_tokens(tmp_path / "gen_0000.vabt")
    assert grid.tokens.shape == (4, 100)


def test_cli_manifest_reflects_overrides(tmp_path):
    out = str(tmp_path)
    assert main(["datagen", "--out", out] + _sets()) == 0
    h1 = dict(l.split("=", 1) for l in
              (tmp_path / "manifest-datagen.txt").read_text().strip().split("\n"))
    assert main(["datagen", "--out", out] + _sets(["data.master_seed=9"])) == 0
    h2 = dict(l.split("=", 1) for l in
              (tmp_path / "manifest-datagen.txt").read_text().strip().split("\n"))
    assert h1["config_hash"] != h2["config_hash"]
    assert h2["seed"] == "9"

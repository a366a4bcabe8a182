"""Plain-text key=value configuration with dotted namespaces.

Every tunable has a typed default below; files and --set overrides may only
touch known keys, and values are parsed by the default's type. The effective
config hashes to a stable digest recorded in run manifests.
"""

from __future__ import annotations

from hashlib import sha256

from soundsight.codec import CodecConfig
from soundsight.data import DatasetConfig
from soundsight.model import C2FConfig, ModelConfig
from soundsight.sampling import DecodeConfig
from soundsight.train import TrainConfig


class ConfigError(ValueError):
    """Unknown key, malformed line, or unparsable value."""


def _train_defaults(prefix: str, **overrides) -> dict:
    base = {
        "batch_size": 8, "steps": 1000, "epochs": 0, "base_lr": 2e-4,
        "warmup_steps": 100, "weight_decay": 1e-5, "beta1": 0.9,
        "beta2": 0.95, "label_smoothing": 0.1, "mixup_prob": 0.5,
        "roll_prob": 0.1, "visual_dropout_prob": 0.1, "val_fraction": 0.1,
        "eval_every": 50, "early_stop_ce": 0.0, "seed": 0,
    }
    base.update(overrides)
    return {f"{prefix}.{k}": v for k, v in base.items()}


DEFAULTS: dict[str, object] = {
    # synthetic corpus
    "data.audio_factors": 4,
    "data.visual_factors": 4,
    "data.pairs_per_class": 8,
    "data.duration": 10.0,
    "data.sample_rate": 16000,
    "data.visual_dim": 32,
    "data.visual_fps": 1,
    "data.audio_noise": 0.01,
    "data.visual_noise": 0.05,
    "data.class_corr": 0.0,
    "data.master_seed": 0,
    "data.val_fraction": 0.125,
    "data.test_fraction": 0.125,
    # residual codec
    "codec.frame_size": 320,
    "codec.feature_dim": 64,
    "codec.levels": 4,
    "codec.entries": 256,
    "codec.kmeans_iters": 10,
    "codec.max_frames": 100000,
    "codec.seed": 0,
    # backbone geometry
    "model.d_emb": 128,
    "model.layers": 8,
    "model.expert_layers": 4,
    "model.heads": 4,
    "model.ffn_mult": 4,
    # refiner geometry
    "c2f.d_emb": 128,
    "c2f.layers": 6,
    "c2f.heads": 4,
    "c2f.ffn_mult": 4,
    # decoding
    "decode.steps": 16,
    "decode.cfg_scale": 5.0,
    "decode.alpha0": 10.5,
    "decode.c2f_steps": 36,
    "decode.seed": 0,
    "decode.count": 4,
    "decode.split": "test",
    # evaluation
    "retrieve.split": "test",
    "evaluate.split": "test",
    "evaluate.generated": "",
    # ablation sweeps
    "bench.axes": "cfg_scale",
    "bench.seeds": "0",
    "bench.eval_items": 8,
    "bench.workers": 1,
    "bench.split": "test",
}
DEFAULTS.update(_train_defaults("pretrain", steps=2000, early_stop_ce=0.0))
DEFAULTS.update(_train_defaults("c2ftrain", steps=500))
DEFAULTS.update(_train_defaults("contrastive", steps=300, base_lr=1e-4))
DEFAULTS["contrastive.symmetric"] = True
DEFAULTS["contrastive.tau0"] = 0.05
DEFAULTS.update(_train_defaults("classify", steps=300, base_lr=1e-4))
DEFAULTS["classify.mode"] = "va"
DEFAULTS["classify.target"] = "composite"
DEFAULTS.update(_train_defaults("probe", steps=400, base_lr=1e-2))
DEFAULTS["probe.mode"] = "a"
DEFAULTS["probe.target"] = "audio"

TARGETS = ("composite", "audio", "visual")


def _parse_value(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError("not a boolean")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as e:
        kind = type(default).__name__
        raise ConfigError(f"config: {key}={raw!r} is not a valid {kind}") from e


def _set(cfg: dict, key: str, raw: str) -> None:
    if key not in DEFAULTS:
        raise ConfigError(f"config: unknown key {key!r}")
    cfg[key] = _parse_value(key, raw)


def load_config(path=None, overrides: list[str] | None = None) -> dict:
    """Effective config: defaults, then the file, then --set overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"config: {path}:{lineno}: expected key=value, got {line!r}")
                key, raw = line.split("=", 1)
                _set(cfg, key.strip(), raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"config: override {item!r} must be key=value")
        key, raw = item.split("=", 1)
        _set(cfg, key.strip(), raw)
    return cfg


def config_hash(cfg: dict) -> str:
    h = sha256()
    for key in sorted(cfg):
        h.update(f"{key}={cfg[key]!r}\n".encode())
    return h.hexdigest()


def render_defaults() -> str:
    lines = ["configuration keys (key = default):"]
    for key in sorted(DEFAULTS):
        lines.append(f"  {key} = {DEFAULTS[key]}")
    return "\n".join(lines)


def _ns(cfg: dict, prefix: str) -> dict:
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def dataset_config(cfg: dict) -> DatasetConfig:
    d = _ns(cfg, "data")
    d.pop("val_fraction")
    d.pop("test_fraction")
    return DatasetConfig(**d)


def codec_config(cfg: dict) -> CodecConfig:
    c = _ns(cfg, "codec")
    c.pop("max_frames")
    c.pop("seed")
    return CodecConfig(sample_rate=cfg["data.sample_rate"], **c)


def _visual_frames(cfg: dict) -> int:
    return int(round(cfg["data.duration"] * cfg["data.visual_fps"]))


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        d_emb=cfg["model.d_emb"], layers=cfg["model.layers"],
        expert_layers=cfg["model.expert_layers"], heads=cfg["model.heads"],
        coarse_levels=min(cfg["codec.levels"], 4), vocab=cfg["codec.entries"],
        visual_dim=cfg["data.visual_dim"], visual_frames=_visual_frames(cfg),
        ffn_mult=cfg["model.ffn_mult"])


def c2f_config(cfg: dict) -> C2FConfig:
    if cfg["codec.levels"] <= 4:
        raise ConfigError("config: c2f stage needs codec.levels > 4")
    return C2FConfig(
        d_emb=cfg["c2f.d_emb"], layers=cfg["c2f.layers"], heads=cfg["c2f.heads"],
        total_levels=cfg["codec.levels"], coarse_levels=4,
        vocab=cfg["codec.entries"], visual_dim=cfg["data.visual_dim"],
        visual_frames=_visual_frames(cfg), ffn_mult=cfg["c2f.ffn_mult"])


def train_config(cfg: dict, prefix: str) -> TrainConfig:
    t = {k: v for k, v in _ns(cfg, prefix).items()
         if k in TrainConfig.__dataclass_fields__}
    if prefix == "contrastive":
        t["contrastive_symmetric"] = cfg["contrastive.symmetric"]
    return TrainConfig(**t)


def decode_config(cfg: dict) -> DecodeConfig:
    return DecodeConfig(steps=cfg["decode.steps"], cfg_scale=cfg["decode.cfg_scale"],
                        alpha0=cfg["decode.alpha0"], c2f_steps=cfg["decode.c2f_steps"],
                        seed=cfg["decode.seed"])


def bench_axes(cfg: dict) -> list[str]:
    axes = [a.strip() for a in cfg["bench.axes"].split(",") if a.strip()]
    if not axes:
        raise ConfigError("config: bench.axes must name at least one axis")
    return axes


def bench_seeds(cfg: dict) -> list[int]:
    try:
        seeds = [int(s) for s in cfg["bench.seeds"].split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"config: bench.seeds {cfg['bench.seeds']!r} must be comma-separated ints") from e
    if not seeds:
        raise ConfigError("config: bench.seeds must name at least one seed")
    return seeds

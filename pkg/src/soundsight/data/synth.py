"""Synthetic paired audio-visual corpus with factorized class structure.

Audio is a 3-sinusoid mixture whose frequency band is set by the audio
factor, amplitude-modulated by two seeded event bursts. Visual features are
one frame per second: the visual factor's unit mean vector plus noise, with
frames overlapping an audio burst shifted by a shared event vector. The
class factors are therefore strictly modality-private while burst timing is
visible on both sides (the instance-level cross-modal signal).

All randomness flows from per-sample streams derived by counter-based
splitting of (master_seed, stream tag, factor, sample seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# stream tags keep the per-purpose generators disjoint
_TAG_AUDIO = 0xA0D10
_TAG_VISUAL = 0x515ED
_TAG_BANK = 0xBA9C
_TAG_CLASS = 0xC1A55

BURST_WIDTH = 0.15  # seconds, envelope std of one event burst
MIN_BURST_GAP = 1.0


@dataclass(frozen=True)
class DatasetConfig:
    """Corpus geometry. Composite label = a_factor * visual_factors + v_factor.

    class_corr > 0 correlates the sampled (a, v) factor pair (a == v with
    that extra probability, requires equal factor counts); the default 0
    keeps factors independent so neither modality alone can beat chance on
    the other's factor.
    """

    audio_factors: int = 4
    visual_factors: int = 4
    pairs_per_class: int = 8
    duration: float = 10.0
    sample_rate: int = 16000
    visual_dim: int = 32
    visual_fps: int = 1
    audio_noise: float = 0.01
    visual_noise: float = 0.05
    class_corr: float = 0.0
    master_seed: int = 0

    def __post_init__(self):
        if self.audio_factors < 2 or self.visual_factors < 2:
            raise ValueError("DatasetConfig: factor counts must be >= 2")
        if self.pairs_per_class < 1:
            raise ValueError("DatasetConfig: pairs_per_class must be >= 1")
        if self.duration <= 0 or self.sample_rate <= 0 or self.visual_fps < 1:
            raise ValueError("DatasetConfig: duration, sample_rate, visual_fps must be positive")
        if abs(self.duration * self.visual_fps - round(self.duration * self.visual_fps)) > 1e-9:
            raise ValueError("DatasetConfig: duration * visual_fps must be an integer frame count")
        if not 0.0 <= self.class_corr < 1.0:
            raise ValueError("DatasetConfig: class_corr must be in [0, 1)")
        if self.class_corr > 0.0 and self.audio_factors != self.visual_factors:
            raise ValueError("DatasetConfig: class_corr needs audio_factors == visual_factors")

    @property
    def classes(self) -> int:
        return self.audio_factors * self.visual_factors

    @property
    def samples_per_clip(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def visual_frames(self) -> int:
        return int(round(self.duration * self.visual_fps))


@dataclass
class PairedSample:
    """One clip: waveform, per-second visual features, factor labels."""

    waveform: np.ndarray
    visual: np.ndarray
    a_factor: int
    v_factor: int
    seed: int
    burst_times: np.ndarray

    def composite_label(self, cfg: DatasetConfig) -> int:
        return self.a_factor * cfg.visual_factors + self.v_factor


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(tuple(int(k) for k in key)))


@lru_cache(maxsize=64)
def _banks(cfg: DatasetConfig):
    """Per-factor frequency banks, visual means, shared event vector."""
    freq = np.empty((cfg.audio_factors, 8))
    for a in range(cfg.audio_factors):
        r = _rng(cfg.master_seed, _TAG_BANK, 0, a)
        lo = 220.0 + 480.0 * a
        freq[a] = lo + (np.arange(8) + 0.5) * 48.0 + r.uniform(-12.0, 12.0, size=8)
    vmean = np.empty((cfg.visual_factors, cfg.visual_dim))
    for v in range(cfg.visual_factors):
        r = _rng(cfg.master_seed, _TAG_BANK, 1, v)
        x = r.normal(size=cfg.visual_dim)
        vmean[v] = x / np.linalg.norm(x)
    r = _rng(cfg.master_seed, _TAG_BANK, 2)
    ev = r.normal(size=cfg.visual_dim)
    ev /= np.linalg.norm(ev)
    return freq, vmean, ev


def freq_bank(cfg: DatasetConfig, a_factor: int) -> np.ndarray:
    return _banks(cfg)[0][a_factor].copy()


def visual_mean(cfg: DatasetConfig, v_factor: int) -> np.ndarray:
    return _banks(cfg)[1][v_factor].copy()


def event_vector(cfg: DatasetConfig) -> np.ndarray:
    return _banks(cfg)[2].copy()


def _draw_bursts(rng: np.random.Generator, duration: float) -> np.ndarray:
    lo, hi = 0.75, duration - 0.75
    if hi <= lo:
        raise ValueError(f"_draw_bursts: clip of {duration}s too short for events")
    if hi - lo < MIN_BURST_GAP:
        return rng.uniform(lo, hi, size=1)    # short clip: one event fits
    for _ in range(1000):
        t = np.sort(rng.uniform(lo, hi, size=2))
        if t[1] - t[0] >= MIN_BURST_GAP:
            return t
    raise RuntimeError("burst rejection sampling failed")  # pragma: no cover


def generate_pair(cfg: DatasetConfig, a_factor: int, v_factor: int, seed: int) -> PairedSample:
    """Fully deterministic in (config, class, seed); bitwise repeatable."""
    if not 0 <= a_factor < cfg.audio_factors or not 0 <= v_factor < cfg.visual_factors:
        raise ValueError(f"generate_pair: factors ({a_factor}, {v_factor}) out of range")
    freqs, vmeans, ev = _banks(cfg)

    arng = _rng(cfg.master_seed, _TAG_AUDIO, a_factor, seed)
    chosen = freqs[a_factor][arng.choice(8, size=3, replace=False)]
    phases = arng.uniform(0.0, 2.0 * np.pi, size=3)
    bursts = _draw_bursts(arng, cfg.duration)

    t = np.arange(cfg.samples_per_clip) / cfg.sample_rate
    env = 0.25 + 0.75 * sum(np.exp(-0.5 * ((t - b) / BURST_WIDTH) ** 2) for b in bursts)
    sig = sum(np.sin(2.0 * np.pi * f * t + p) for f, p in zip(chosen, phases)) / 3.0
    waveform = 0.9 * env * sig
    if cfg.audio_noise > 0.0:
        waveform = waveform + cfg.audio_noise * arng.normal(size=t.size)

    vrng = _rng(cfg.master_seed, _TAG_VISUAL, v_factor, seed)
    centers = (np.arange(cfg.visual_frames) + 0.5) / cfg.visual_fps
    strength = sum(np.exp(-0.5 * ((centers - b) / 0.5) ** 2) for b in bursts)
    visual = np.tile(vmeans[v_factor], (cfg.visual_frames, 1))
    visual += strength[:, None] * ev
    if cfg.visual_noise > 0.0:
        visual = visual + cfg.visual_noise * vrng.normal(size=visual.shape)

    return PairedSample(waveform=waveform, visual=visual, a_factor=a_factor,
                        v_factor=v_factor, seed=seed, burst_times=bursts)


def build_dataset(cfg: DatasetConfig) -> list[PairedSample]:
    """Materialize the corpus; sample seeds are consecutive indices.

    class_corr == 0 enumerates every composite class exactly pairs_per_class
    times; otherwise classes are drawn per sample under the correlated law.
    """
    total = cfg.classes * cfg.pairs_per_class
    samples = []
    if cfg.class_corr == 0.0:
        i = 0
        for a in range(cfg.audio_factors):
            for v in range(cfg.visual_factors):
                for _ in range(cfg.pairs_per_class):
                    samples.append(generate_pair(cfg, a, v, seed=i))
                    i += 1
    else:
        for i in range(total):
            crng = _rng(cfg.master_seed, _TAG_CLASS, i)
            v = int(crng.integers(cfg.visual_factors))
            a = v if crng.random() < cfg.class_corr else int(crng.integers(cfg.audio_factors))
            samples.append(generate_pair(cfg, a, v, seed=i))
    return samples


def split_indices(cfg: DatasetConfig, n: int, val_fraction: float = 0.125,
                  test_fraction: float = 0.125) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic round-robin split; balanced across the index order."""
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1:
        raise ValueError("split_indices: bad fractions")
    val, test, train = [], [], []
    acc_v = acc_t = 0.0
    for i in range(n):
        acc_v += val_fraction
        acc_t += test_fraction
        if acc_v >= 1.0:
            val.append(i)
            acc_v -= 1.0
        elif acc_t >= 1.0:
            test.append(i)
            acc_t -= 1.0
        else:
            train.append(i)
    return np.array(train, dtype=np.int64), np.array(val, dtype=np.int64), np.array(test, dtype=np.int64)

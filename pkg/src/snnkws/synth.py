"""Deterministic synthetic two-class keyword corpus.

The "keyword" is a fixed multi-band chirp motif: a sequence of short tone
segments stepping through a fixed set of filterbank band centres, each
segment sweeping slightly upward.  Both classes share the same background
process (white noise plus random single-tone distractor bursts), so the
classifier has to recognize the motif's band/time structure rather than
overall energy.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import io as io_
from .afe import AudioClip, FilterbankConfig

# band indices (into the default 16-band bank) visited by the motif, in order
MOTIF_BANDS = [4, 7, 10, 6, 9, 12]
MOTIF_SEGMENT_S = 0.15


@dataclass
class SynthConfig:
    sample_rate_hz: int = 48_000
    duration_s: float = 3.0
    motif_amplitude: float = 0.85
    noise_sigma: float = 0.05
    n_distractors: int = 3
    distractor_amplitude: float = 0.7
    distractor_s: float = 0.15
    fb_config: FilterbankConfig = field(default_factory=FilterbankConfig)


def _tone_burst(rng, n_total, start_s, length_s, freq_hz, amplitude, fs,
                chirp_factor=1.0):
    """Windowed tone (optionally chirped) added into a zero buffer."""
    n0 = int(start_s * fs)
    n = int(length_s * fs)
    n = min(n, n_total - n0)
    buf = np.zeros(n_total)
    if n <= 0:
        return buf
    t = np.arange(n) / fs
    inst_freq = freq_hz * chirp_factor ** (t / length_s)
    phase = 2 * np.pi * np.cumsum(inst_freq) / fs
    window = np.hanning(n)
    buf[n0:n0 + n] = amplitude * window * np.sin(phase)
    return buf


def make_clip(rng: np.random.Generator, label: int,
              cfg: SynthConfig | None = None) -> AudioClip:
    """One synthetic clip; label 1 embeds the keyword motif."""
    cfg = cfg or SynthConfig()
    fs = cfg.sample_rate_hz
    n = int(cfg.duration_s * fs)
    centers = cfg.fb_config.center_frequencies()

    x = rng.normal(0.0, cfg.noise_sigma, n)
    # shared background: random distractor bursts in both classes
    for _ in range(cfg.n_distractors):
        band = int(rng.integers(2, len(centers) - 1))
        start = float(rng.uniform(0.0, cfg.duration_s - cfg.distractor_s))
        amp = cfg.distractor_amplitude * float(rng.uniform(0.7, 1.3))
        x += _tone_burst(rng, n, start, cfg.distractor_s, centers[band], amp, fs)

    if label == 1:
        start = float(rng.uniform(
            0.0, cfg.duration_s - len(MOTIF_BANDS) * MOTIF_SEGMENT_S - 0.1))
        amp = cfg.motif_amplitude * float(rng.uniform(0.8, 1.2))
        for k, band in enumerate(MOTIF_BANDS):
            x += _tone_burst(rng, n, start + k * MOTIF_SEGMENT_S,
                             MOTIF_SEGMENT_S, centers[band], amp, fs,
                             chirp_factor=1.12)

    np.clip(x, -1.0, 1.0, out=x)
    return AudioClip(x, fs)


def make_dataset(n_samples: int, seed: int,
                 cfg: SynthConfig | None = None) -> list[tuple[AudioClip, int]]:
    """Balanced in-memory corpus, deterministic in (n_samples, seed)."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_samples):
        label = i % 2
        out.append((make_clip(rng, label, cfg), label))
    return out


def write_corpus(out_dir, n_train: int = 400, n_test: int = 100,
                 seed: int = 1234, cfg: SynthConfig | None = None):
    """Write WAVs plus train.tsv / test.tsv manifests; returns manifest paths."""
    os.makedirs(out_dir, exist_ok=True)
    manifests = []
    for split, count, split_seed in (("train", n_train, seed),
                                     ("test", n_test, seed + 1)):
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        manifest = os.path.join(out_dir, f"{split}.tsv")
        with open(manifest, "w", encoding="utf-8") as f:
            for i, (clip, label) in enumerate(make_dataset(count, split_seed, cfg)):
                rel = os.path.join(split, f"{split}_{i:04d}.wav")
                io_.write_wav(os.path.join(out_dir, rel), clip)
                f.write(f"{rel}\t{label}\n")
        manifests.append(manifest)
    return tuple(manifests)

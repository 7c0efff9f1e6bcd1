"""Streaming audio front-end.

Mono PCM audio is amplified by a selectable digital gain (0/6/12 dB), split
into N band-pass channels by a bank of 2nd-order Butterworth biquads with
geometrically spaced centre frequencies, full-wave rectified, smoothed and
thresholded by a per-band LIF encoder, and finally binned into an event
raster (channels x timesteps of event counts).

The whole chain is buffer-free: audio can be fed in arbitrary chunk sizes
through :class:`AudioFrontend` and the resulting raster is bit-identical to
one-shot processing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.signal import lfilter

from .errors import ConfigError

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 48_000
DEFAULT_BIN_MS = 100.0
DEFAULT_DURATION_S = 3.0


@dataclass
class AudioClip:
    """Mono audio samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip requires a 1-D mono sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip samples must all be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class FilterbankConfig:
    num_bands: int = 16
    f_low_hz: float = 40.0
    f_high_hz: float = 16_940.0
    q: float = 4.0
    gain_db: int = 0

    def __post_init__(self):
        if self.num_bands < 1:
            raise ConfigError("num_bands must be >= 1")
        if not (0.0 < self.f_low_hz <= self.f_high_hz):
            raise ConfigError("need 0 < f_low_hz <= f_high_hz")
        if self.q <= 0:
            raise ConfigError("q must be positive")
        if self.gain_db not in (0, 6, 12):
            raise ConfigError("gain_db must be one of 0, 6, 12 dB")

    def center_frequencies(self) -> np.ndarray:
        if self.num_bands == 1:
            return np.array([self.f_low_hz])
        return np.geomspace(self.f_low_hz, self.f_high_hz, self.num_bands)


@dataclass
class BiquadBank:
    """Per-band band-pass biquad coefficients, normalized (a0 = 1)."""

    center_freqs_hz: np.ndarray          # (N,)
    b: np.ndarray                        # (N, 3)
    a: np.ndarray                        # (N, 3), a[:, 0] == 1
    sample_rate_hz: int

    @property
    def num_bands(self) -> int:
        return len(self.center_freqs_hz)


@dataclass
class EncoderConfig:
    encoder_tau_ms: float = 10.0
    encoder_threshold: float = 1.0

    def __post_init__(self):
        if self.encoder_tau_ms <= 0:
            raise ConfigError("encoder_tau_ms must be positive")
        if self.encoder_threshold <= 0:
            raise ConfigError("encoder_threshold must be positive")


@dataclass
class EventRaster:
    """channels x timesteps grid of non-negative event counts."""

    counts: np.ndarray                   # (channels, timesteps) int
    bin_ms: float = DEFAULT_BIN_MS

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ValueError("raster counts must be 2-D (channels x timesteps)")
        if np.any(self.counts < 0):
            raise ValueError("raster counts must be non-negative")

    @property
    def channels(self) -> int:
        return self.counts.shape[0]

    @property
    def timesteps(self) -> int:
        return self.counts.shape[1]


def pad_clip(audio: AudioClip, target_s: float) -> AudioClip:
    """Zero-pad or truncate a clip to exactly round(target_s * fs) samples."""
    if target_s <= 0:
        raise ValueError("target duration must be positive")
    n_target = int(round(target_s * audio.sample_rate_hz))
    x = audio.samples
    if len(x) >= n_target:
        y = x[:n_target].copy()
    else:
        y = np.zeros(n_target)
        y[: len(x)] = x
    return AudioClip(y, audio.sample_rate_hz)


def design_filterbank(config: FilterbankConfig, sample_rate_hz: int) -> BiquadBank:
    """Design one band-pass biquad per band.

    Bilinear transform with frequency pre-warping at each centre frequency
    (RBJ constant-peak-gain band-pass), bandwidth f_i / q, unity gain at f_i.
    """
    centers = config.center_frequencies()
    nyquist = sample_rate_hz / 2.0
    b = np.zeros((config.num_bands, 3))
    a = np.zeros((config.num_bands, 3))
    for i, f0 in enumerate(centers):
        f_hi = f0 * (1.0 + 1.0 / (2.0 * config.q))
        if f_hi >= nyquist:
            raise ConfigError(
                f"band {i} (centre {f0:.1f} Hz, upper edge {f_hi:.1f} Hz) "
                f"reaches the Nyquist frequency {nyquist:.1f} Hz"
            )
        # pre-warp both -3 dB edges so the digital bandwidth is exactly f0/q
        f_lo = f0 * (1.0 - 1.0 / (2.0 * config.q))
        if f_lo <= 0.0:
            raise ConfigError(
                f"band {i}: q = {config.q} puts the lower band edge at or "
                "below 0 Hz; q must exceed 0.5"
            )
        w1 = math.tan(math.pi * f_lo / sample_rate_hz)
        w2 = math.tan(math.pi * f_hi / sample_rate_hz)
        bw = w2 - w1
        w0_sq = w1 * w2
        a0 = 1.0 + bw + w0_sq
        b[i] = np.array([bw, 0.0, -bw]) / a0
        a[i] = np.array([a0, 2.0 * (w0_sq - 1.0), 1.0 - bw + w0_sq]) / a0
    return BiquadBank(centers, b, a, sample_rate_hz)


def process_audio(bank: BiquadBank, audio: AudioClip, gain_db: int = 0) -> np.ndarray:
    """Gain-scale, filter and full-wave rectify.  Returns (bands, samples) >= 0."""
    if audio.sample_rate_hz != bank.sample_rate_hz:
        raise ValueError(
            f"audio sample rate {audio.sample_rate_hz} does not match "
            f"filterbank design rate {bank.sample_rate_hz}"
        )
    x = audio.samples * 10.0 ** (gain_db / 20.0)
    out = np.empty((bank.num_bands, len(x)))
    for i in range(bank.num_bands):
        out[i] = lfilter(bank.b[i], bank.a[i], x)
    return np.abs(out)


@njit(cache=True, nogil=True)
def _lif_encode_kernel(x, k, threshold, v):
    """Leaky integrator with threshold-subtract reset, one event max per sample.

    v <- v * (1 - k) + x * k per sample; mutates v in place so chunked calls
    continue exactly where the previous chunk stopped.
    """
    n_bands, n_samples = x.shape
    events = np.zeros((n_bands, n_samples), dtype=np.uint8)
    for t in range(n_samples):
        for b in range(n_bands):
            vb = v[b] * (1.0 - k) + x[b, t] * k
            if vb >= threshold:
                events[b, t] = 1
                vb -= threshold
            v[b] = vb
    return events


def encode_events(band_signals: np.ndarray, cfg: EncoderConfig,
                  sample_rate_hz: int) -> list[np.ndarray]:
    """Convert rectified band signals into per-band event times (seconds)."""
    band_signals = np.ascontiguousarray(band_signals, dtype=np.float64)
    k = (1.0 / sample_rate_hz) / (cfg.encoder_tau_ms / 1000.0)
    v = np.zeros(band_signals.shape[0])
    flags = _lif_encode_kernel(band_signals, k, cfg.encoder_threshold, v)
    return [np.flatnonzero(flags[b]) / sample_rate_hz
            for b in range(band_signals.shape[0])]


def bin_raster(events: list[np.ndarray], bin_ms: float,
               duration_s: float) -> EventRaster:
    """Bin per-channel event times (seconds) into an EventRaster.

    Events at/after duration_s are dropped with a counted warning.
    """
    if bin_ms <= 0:
        raise ValueError("bin_ms must be positive")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n_steps = int(math.ceil(duration_s * 1000.0 / bin_ms))
    counts = np.zeros((len(events), n_steps), dtype=np.int32)
    dropped = 0
    for c, times in enumerate(events):
        times = np.asarray(times, dtype=np.float64)
        keep = times < duration_s
        dropped += int(np.sum(~keep))
        idx = np.floor(times[keep] * 1000.0 / bin_ms).astype(np.int64)
        np.add.at(counts[c], idx, 1)
    if dropped:
        log.warning("bin_raster: dropped %d events beyond %.3f s", dropped, duration_s)
    return EventRaster(counts, bin_ms)


@dataclass
class AudioFrontend:
    """Stateful streaming encoder: feed chunks, then finalize into a raster.

    One instance per audio stream; instances share nothing.
    """

    fb_config: FilterbankConfig = field(default_factory=FilterbankConfig)
    enc_config: EncoderConfig = field(default_factory=EncoderConfig)
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.fb_config.f_high_hz >= self.sample_rate_hz / 2:
            raise ConfigError("f_high_hz must be below Nyquist")
        self.bank = design_filterbank(self.fb_config, self.sample_rate_hz)
        self.reset()

    def reset(self):
        n = self.bank.num_bands
        self._zi = np.zeros((n, 2))
        self._v = np.zeros(n)
        self._events: list[list[np.ndarray]] = [[] for _ in range(n)]
        self._n_processed = 0

    def process(self, samples: np.ndarray):
        """Consume one chunk of audio samples."""
        x = np.asarray(samples, dtype=np.float64)
        if x.size == 0:
            return
        x = x * 10.0 ** (self.fb_config.gain_db / 20.0)
        bands = np.empty((self.bank.num_bands, len(x)))
        for i in range(self.bank.num_bands):
            bands[i], self._zi[i] = lfilter(
                self.bank.b[i], self.bank.a[i], x, zi=self._zi[i])
        bands = np.ascontiguousarray(np.abs(bands))
        k = (1.0 / self.sample_rate_hz) / (self.enc_config.encoder_tau_ms / 1000.0)
        flags = _lif_encode_kernel(bands, k, self.enc_config.encoder_threshold,
                                   self._v)
        for b in range(self.bank.num_bands):
            idx = np.flatnonzero(flags[b]) + self._n_processed
            if idx.size:
                self._events[b].append(idx)
        self._n_processed += len(x)

    def finalize(self, bin_ms: float = DEFAULT_BIN_MS,
                 duration_s: float | None = None) -> EventRaster:
        if duration_s is None:
            duration_s = self._n_processed / self.sample_rate_hz
        times = [
            (np.concatenate(ev) if ev else np.empty(0)) / self.sample_rate_hz
            for ev in self._events
        ]
        return bin_raster(times, bin_ms, duration_s)


def encode_clip(audio: AudioClip,
                fb_config: FilterbankConfig | None = None,
                enc_config: EncoderConfig | None = None,
                bin_ms: float = DEFAULT_BIN_MS,
                duration_s: float = DEFAULT_DURATION_S) -> EventRaster:
    """Full one-shot chain: pad/clip -> gain -> filter -> rectify -> LIF -> bin."""
    fb_config = fb_config or FilterbankConfig()
    enc_config = enc_config or EncoderConfig()
    clip = pad_clip(audio, duration_s)
    fe = AudioFrontend(fb_config, enc_config, clip.sample_rate_hz)
    fe.process(clip.samples)
    return fe.finalize(bin_ms, duration_s)

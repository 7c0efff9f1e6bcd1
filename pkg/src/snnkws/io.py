"""Binary file formats and WAV ingestion.

All formats are little-endian:

* Event raster ("EVRS"): magic, version u16, channels u16, timesteps u32,
  bin_ms f32, then row-major u16 counts.
* Quantized model ("SYNQ"): magic, version u16, input_shift u8 (log2 of the
  state headroom factor), layer count u8, then per layer: rows u16, cols u16,
  d_syn u8[cols], d_mem u8[cols], theta i16[cols], weight scale f32, weights
  i8 row-major.  Trailing CRC32 over everything before it.
* Float model ("SYNF"): same layout with f32 thresholds and f32 weights and
  no input_shift byte.
"""

from __future__ import annotations

import struct
import wave
import zlib

import numpy as np

from .afe import AudioClip, EventRaster
from .errors import DataError
from .model import (FloatModel, Layer, QuantizedLayer, QuantizedModel,
                    SynNetSpec)

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# WAV

def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono WAV; samples normalized by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, "
                                f"got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, "
                                f"got {8 * w.getsampwidth()}-bit")
            raw = w.readframes(w.getnframes())
            rate = w.getframerate()
    except wave.Error as e:
        raise DataError(f"{path}: malformed WAV ({e})") from e
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# event raster

def write_raster(path, raster: EventRaster):
    counts = raster.counts
    if np.any(counts > 0xFFFF):
        raise DataError("raster counts exceed u16 range")
    header = struct.pack("<4sHHIf", b"EVRS", FORMAT_VERSION,
                         raster.channels, raster.timesteps,
                         float(raster.bin_ms))
    with open(path, "wb") as f:
        f.write(header)
        f.write(counts.astype("<u2").tobytes())


def read_raster(path) -> EventRaster:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != b"EVRS":
        raise DataError(f"{path}: not an EVRS raster file")
    _, version, channels, timesteps, bin_ms = struct.unpack_from("<4sHHIf", data)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported EVRS version {version}")
    body = np.frombuffer(data, dtype="<u2", offset=16,
                         count=channels * timesteps)
    counts = body.reshape(channels, timesteps).astype(np.int32)
    return EventRaster(counts, bin_ms)


# ---------------------------------------------------------------------------
# models

def write_quantized_model(path, model: QuantizedModel):
    buf = bytearray()
    buf += struct.pack("<4sHBB", b"SYNQ", FORMAT_VERSION,
                       model.input_shift, len(model.layers))
    for layer in model.layers:
        rows, cols = layer.weights.shape
        buf += struct.pack("<HH", rows, cols)
        buf += layer.d_syn.astype("u1").tobytes()
        buf += layer.d_mem.astype("u1").tobytes()
        buf += layer.threshold.astype("<i2").tobytes()
        buf += struct.pack("<f", layer.scale)
        buf += np.ascontiguousarray(layer.weights, dtype="i1").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(buf)


def read_quantized_model(path, spec: SynNetSpec | None = None) -> QuantizedModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"SYNQ":
        raise DataError(f"{path}: not a SYNQ model file")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if crc != zlib.crc32(data[:-4]):
        raise DataError(f"{path}: CRC mismatch, file corrupted")
    _, version, input_shift, n_layers = struct.unpack_from("<4sHBB", data)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported SYNQ version {version}")
    off = 8
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack_from("<HH", data, off)
        off += 4
        d_syn = np.frombuffer(data, "u1", cols, off).copy(); off += cols
        d_mem = np.frombuffer(data, "u1", cols, off).copy(); off += cols
        theta = np.frombuffer(data, "<i2", cols, off).copy(); off += 2 * cols
        (scale,) = struct.unpack_from("<f", data, off); off += 4
        w = np.frombuffer(data, "i1", rows * cols, off).copy(); off += rows * cols
        layers.append(QuantizedLayer(w.reshape(rows, cols), float(scale),
                                     d_syn, d_mem, theta))
    layers[-1].spiking = False
    if spec is None:
        spec = _infer_spec(layers)
    return QuantizedModel(spec, layers, input_shift=input_shift)


def write_float_model(path, model: FloatModel):
    buf = bytearray()
    buf += struct.pack("<4sHB", b"SYNF", FORMAT_VERSION, len(model.layers))
    for layer in model.layers:
        rows, cols = layer.weights.shape
        buf += struct.pack("<HH", rows, cols)
        buf += layer.d_syn.astype("u1").tobytes()
        buf += layer.d_mem.astype("u1").tobytes()
        buf += layer.threshold.astype("<f4").tobytes()
        buf += np.ascontiguousarray(layer.weights, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(buf)


def read_float_model(path, spec: SynNetSpec | None = None) -> FloatModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 11 or data[:4] != b"SYNF":
        raise DataError(f"{path}: not a SYNF model file")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if crc != zlib.crc32(data[:-4]):
        raise DataError(f"{path}: CRC mismatch, file corrupted")
    _, version, n_layers = struct.unpack_from("<4sHB", data)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported SYNF version {version}")
    off = 7
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack_from("<HH", data, off)
        off += 4
        d_syn = np.frombuffer(data, "u1", cols, off).copy(); off += cols
        d_mem = np.frombuffer(data, "u1", cols, off).copy(); off += cols
        theta = np.frombuffer(data, "<f4", cols, off).astype(np.float64)
        off += 4 * cols
        w = np.frombuffer(data, "<f4", rows * cols, off).astype(np.float64)
        off += 4 * rows * cols
        layers.append(Layer(w.reshape(rows, cols), d_syn, d_mem, theta))
    layers[-1].spiking = False
    if spec is None:
        spec = _infer_spec(layers)
    return FloatModel(spec, layers)


def _infer_spec(layers) -> SynNetSpec:
    """Minimal spec for a deserialized model (widths from the layer shapes)."""
    hidden = layers[:-1]
    # tau structure lives in the per-neuron dash codes; SynNetSpec.tau_counts
    # is only descriptive here, so a placeholder of 1 per layer is sufficient
    return SynNetSpec(
        hidden_widths=[l.weights.shape[1] for l in hidden],
        tau_counts=[1] * len(hidden),
        input_channels=layers[0].weights.shape[0],
        readout_neurons=layers[-1].weights.shape[1],
    )

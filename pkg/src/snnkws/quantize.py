"""Float-to-integer model conversion under 8-bit-weight / 16-bit-state
constraints, plus an accuracy audit of the conversion cost.

Per-layer symmetric max-abs scaling: s = 127 / max|w|, w_q = clamp(round(w*s)).
Integer thresholds are theta_q = round(theta * s * kappa) where kappa (a power
of two, the state headroom factor) scales each layer's accumulated synaptic
input so the 16-bit state resolves sub-threshold dynamics.  The integer
engine left-shifts weighted inputs by log2(kappa).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .afe import EventRaster
from .errors import ConfigError
from .model import (FloatModel, Layer, QuantizedLayer, QuantizedModel,
                    forward_int, predict)
from .train import forward_float

INT16_MAX = 32767


@dataclass
class QuantReport:
    scales: list[float]
    max_abs_weight_error: list[float]        # per layer, |w - w_q/s|
    float_accuracy: float = float("nan")
    quantized_accuracy: float = float("nan")
    saturation_events: int = 0

    @property
    def accuracy_gap(self) -> float:
        return self.float_accuracy - self.quantized_accuracy


def quantize(model: FloatModel, kappa: int = 256) -> QuantizedModel:
    """Convert a FloatModel to the deployable integer form."""
    if kappa < 1 or (kappa & (kappa - 1)) != 0:
        raise ConfigError("kappa must be a power of two >= 1")
    layers = []
    for li, layer in enumerate(model.layers):
        max_abs = float(np.max(np.abs(layer.weights)))
        if max_abs == 0.0:
            raise ConfigError(f"layer {li} has all-zero weights")
        s = 127.0 / max_abs
        w_q = np.clip(np.round(layer.weights * s), -127, 127).astype(np.int8)
        theta_q = np.round(layer.threshold * s * kappa)
        if np.any(np.abs(theta_q) > INT16_MAX):
            raise ConfigError(
                f"layer {li}: integer threshold {theta_q.max():.0f} overflows "
                f"16 bits; use a smaller state headroom factor kappa"
            )
        layers.append(QuantizedLayer(w_q, s, layer.d_syn.copy(),
                                     layer.d_mem.copy(),
                                     theta_q.astype(np.int16), layer.spiking))
    return QuantizedModel(model.spec, layers,
                          input_shift=int(kappa).bit_length() - 1)


def auto_kappa(model: FloatModel, theta_q_cap: int = 4096,
               max_kappa: int = 256) -> int:
    """Largest power-of-two kappa keeping every integer threshold <= cap.

    The cap leaves supra-threshold headroom in the 16-bit state so readout
    peaks are representable well above threshold.
    """
    worst = max(float(np.max(layer.threshold * 127.0
                             / np.max(np.abs(layer.weights))))
                for layer in model.layers)
    kappa = max_kappa
    while kappa > 1 and worst * kappa > theta_q_cap:
        kappa //= 2
    if worst * kappa > INT16_MAX:
        raise ConfigError(
            "float thresholds are too large relative to weights for 16-bit "
            "integer thresholds even at kappa = 1"
        )
    return kappa


def dequantize(q_model: QuantizedModel) -> FloatModel:
    """Reconstruct the float model implied by the integer weights."""
    kappa = 1 << q_model.input_shift
    layers = []
    for ql in q_model.layers:
        w = ql.weights.astype(np.float64) / ql.scale
        theta = ql.threshold.astype(np.float64) / (ql.scale * kappa)
        layers.append(Layer(w, ql.d_syn.copy(), ql.d_mem.copy(), theta,
                            ql.spiking))
    return FloatModel(q_model.spec, layers)


def audit(float_model: FloatModel, q_model: QuantizedModel,
          dataset: list[tuple[EventRaster, int]]) -> QuantReport:
    """Run both engines over a dataset; the accuracy gap is the headline."""
    if len(float_model.layers) != len(q_model.layers) or any(
            fl.weights.shape != ql.weights.shape
            for fl, ql in zip(float_model.layers, q_model.layers)):
        raise ValueError("float and quantized models have different topology")

    report = QuantReport(
        scales=[ql.scale for ql in q_model.layers],
        max_abs_weight_error=[
            float(np.max(np.abs(fl.weights - ql.weights / ql.scale)))
            for fl, ql in zip(float_model.layers, q_model.layers)
        ],
    )
    if not dataset:
        return report

    theta_f = float(float_model.readout.threshold[0])
    theta_q = q_model.readout_threshold
    correct_f = correct_q = 0
    for raster, label in dataset:
        trace_f = forward_float(float_model, raster)
        pred_f = bool(np.max(trace_f.v_readout) >= theta_f)
        trace_q = forward_int(q_model, raster)
        pred_q = predict(trace_q, theta_q)
        correct_f += int(pred_f == bool(label))
        correct_q += int(pred_q == bool(label))
        report.saturation_events += trace_q.saturation_events
    report.float_accuracy = correct_f / len(dataset)
    report.quantized_accuracy = correct_q / len(dataset)
    return report

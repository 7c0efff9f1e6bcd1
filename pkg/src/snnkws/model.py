"""SynNet model construction and the integer streaming LIF inference engine.

The deployable network is a feed-forward chain of fully-connected LIF layers
with 8-bit weights and 16-bit saturating state.  Exponential decay is realized
as a bitshift ("dash") decay x <- x - (x >> d) with d = log2(tau / dt); the
float model uses the identical per-step factor (1 - 2^-d) so trained and
deployed dynamics share the same decay law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .afe import EventRaster
from .errors import ConfigError

INT16_MIN = -32768
INT16_MAX = 32767

DEFAULT_H = [160, 60, 60, 60, 60, 60]
DEFAULT_TAU = [2, 2, 4, 4, 8, 8]


@dataclass
class SynNetSpec:
    """Architecture description: layer widths and time-constant counts."""

    hidden_widths: list[int] = field(default_factory=lambda: list(DEFAULT_H))
    tau_counts: list[int] = field(default_factory=lambda: list(DEFAULT_TAU))
    input_channels: int = 16
    base_tau_ms: float = 10.0
    membrane_tau_ms: float = 20.0
    dt_ms: float = 10.0
    readout_neurons: int = 1

    def __post_init__(self):
        if len(self.hidden_widths) != len(self.tau_counts):
            raise ConfigError("hidden_widths and tau_counts must have equal length")
        if self.dt_ms <= 0:
            raise ConfigError("dt_ms must be positive")
        for h, k in zip(self.hidden_widths, self.tau_counts):
            if k < 1 or (k & (k - 1)) != 0:
                raise ConfigError(f"tau count {k} must be a power of two")
            if k > h:
                raise ConfigError(f"tau count {k} exceeds layer width {h}")

    @property
    def total_neurons(self) -> int:
        return sum(self.hidden_widths) + self.readout_neurons


def _dash_code(tau_ms: float, dt_ms: float) -> int:
    """d = log2(tau/dt); the ratio must be an exact power of two >= 1."""
    ratio = tau_ms / dt_ms
    d = round(math.log2(ratio))
    if d < 0 or abs(ratio - 2.0 ** d) > 1e-9 * ratio:
        raise ConfigError(
            f"tau {tau_ms} ms / dt {dt_ms} ms is not a power of two; the "
            "bitshift decay scheme requires tau = 2^d * dt"
        )
    return d


def decay_from_dash(d: np.ndarray | int) -> np.ndarray:
    """Per-step decay factor alpha = 1 - 2^-d shared by float and int paths."""
    return 1.0 - 2.0 ** (-np.asarray(d, dtype=np.float64))


@dataclass
class Layer:
    """One fully-connected LIF layer of a FloatModel."""

    weights: np.ndarray       # (fan_in, n) float64
    d_syn: np.ndarray         # (n,) uint8 dash codes
    d_mem: np.ndarray         # (n,) uint8
    threshold: np.ndarray     # (n,) float64
    spiking: bool = True      # readout layer records membrane instead

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> int:
        return self.weights.shape[1]


@dataclass
class FloatModel:
    spec: SynNetSpec
    layers: list[Layer]       # hidden layers then the readout layer

    @property
    def readout(self) -> Layer:
        return self.layers[-1]

    def copy(self) -> "FloatModel":
        return FloatModel(self.spec, [
            Layer(l.weights.copy(), l.d_syn.copy(), l.d_mem.copy(),
                  l.threshold.copy(), l.spiking)
            for l in self.layers
        ])


@dataclass
class QuantizedLayer:
    weights: np.ndarray       # (fan_in, n) int8
    scale: float              # float weight * scale ~ int weight
    d_syn: np.ndarray         # (n,) uint8
    d_mem: np.ndarray         # (n,) uint8
    threshold: np.ndarray     # (n,) int16
    spiking: bool = True


@dataclass
class QuantizedModel:
    spec: SynNetSpec
    layers: list[QuantizedLayer]
    input_shift: int = 0      # log2 of the state headroom factor kappa

    @property
    def readout(self) -> QuantizedLayer:
        return self.layers[-1]

    @property
    def readout_threshold(self) -> int:
        return int(self.readout.threshold[0])


@dataclass
class NeuronStateInt:
    i_syn: int = 0
    v_mem: int = 0


@dataclass
class ReadoutTrace:
    """Per-timestep readout membrane plus activity statistics."""

    v_readout: np.ndarray             # (timesteps,)
    hidden_spike_counts: np.ndarray   # (layers, timesteps)
    synop_count: int = 0
    neuron_updates: int = 0
    saturation_events: int = 0


def layer_tau_assignment(width: int, n_taus: int, base_tau_ms: float) -> np.ndarray:
    """Distribute a layer's neurons evenly over tau_n = 2^n * base_tau.

    Remainder neurons (width not divisible by n_taus) take the longest tau.
    """
    taus = np.empty(width)
    group = width // n_taus
    for n in range(n_taus):
        taus[n * group:(n + 1) * group] = 2.0 ** (n + 1) * base_tau_ms
    taus[n_taus * group:] = 2.0 ** n_taus * base_tau_ms
    return taus


def build_model(spec: SynNetSpec, seed: int) -> FloatModel:
    """Construct a FloatModel with seeded uniform +-sqrt(1/fan_in) weights."""
    rng = np.random.default_rng(seed)
    d_mem = _dash_code(spec.membrane_tau_ms, spec.dt_ms)
    layers = []
    fan_in = spec.input_channels
    for width, n_taus in zip(spec.hidden_widths, spec.tau_counts):
        taus = layer_tau_assignment(width, n_taus, spec.base_tau_ms)
        d_syn = np.array([_dash_code(t, spec.dt_ms) for t in taus], dtype=np.uint8)
        bound = math.sqrt(1.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, width))
        layers.append(Layer(w, d_syn,
                            np.full(width, d_mem, dtype=np.uint8),
                            np.ones(width)))
        fan_in = width
    # readout: non-spiking membrane output, tau_syn = tau_mem = membrane tau
    n_out = spec.readout_neurons
    bound = math.sqrt(1.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, n_out))
    layers.append(Layer(w,
                        np.full(n_out, d_mem, dtype=np.uint8),
                        np.full(n_out, d_mem, dtype=np.uint8),
                        np.ones(n_out), spiking=False))
    return FloatModel(spec, layers)


def _shift_toward_zero(x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Arithmetic right shift corrected to round toward zero for negatives."""
    return np.where(x >= 0, x >> d, -((-x) >> d))


def lif_step_int(state: NeuronStateInt, weighted_input: int,
                 d_syn: int, d_mem: int, theta_q: int) -> tuple[NeuronStateInt, int]:
    """Single-neuron integer LIF update with saturating 16-bit state."""
    def sat16(v):
        return max(INT16_MIN, min(INT16_MAX, v))

    def shz(x, d):
        return x >> d if x >= 0 else -((-x) >> d)

    i_syn = sat16(state.i_syn - shz(state.i_syn, d_syn) + weighted_input)
    v_mem = sat16(state.v_mem - shz(state.v_mem, d_mem) + i_syn)
    spike = 0
    if v_mem >= theta_q:
        spike = 1
        v_mem -= theta_q
    return NeuronStateInt(i_syn, v_mem), spike


def forward_int(model: QuantizedModel, raster: EventRaster) -> ReadoutTrace:
    """Run the integer engine over a raster; pure in (model, raster)."""
    if raster.channels != model.spec.input_channels:
        raise ValueError(
            f"raster has {raster.channels} channels, model expects "
            f"{model.spec.input_channels}"
        )
    n_steps = raster.timesteps
    n_layers = len(model.layers)
    kappa = 1 << model.input_shift

    i_syn = [np.zeros(l.weights.shape[1], dtype=np.int64) for l in model.layers]
    v_mem = [np.zeros(l.weights.shape[1], dtype=np.int64) for l in model.layers]
    weights = [l.weights.astype(np.int64) for l in model.layers]
    d_syn = [l.d_syn.astype(np.int64) for l in model.layers]
    d_mem = [l.d_mem.astype(np.int64) for l in model.layers]
    theta = [l.threshold.astype(np.int64) for l in model.layers]

    v_readout = np.zeros(n_steps, dtype=np.int64)
    spike_counts = np.zeros((n_layers - 1, n_steps), dtype=np.int64)
    synops = 0
    saturations = 0
    neurons_total = sum(l.weights.shape[1] for l in model.layers)

    counts = raster.counts.astype(np.int64)
    for t in range(n_steps):
        x = counts[:, t]
        for li in range(n_layers):
            fan_out = weights[li].shape[1]
            synops += int(x.sum()) * fan_out
            z = (x @ weights[li]) * kappa

            i_new = i_syn[li] - _shift_toward_zero(i_syn[li], d_syn[li]) + z
            clipped = np.clip(i_new, INT16_MIN, INT16_MAX)
            saturations += int(np.count_nonzero(clipped != i_new))
            i_syn[li] = clipped

            v_new = v_mem[li] - _shift_toward_zero(v_mem[li], d_mem[li]) + i_syn[li]
            clipped = np.clip(v_new, INT16_MIN, INT16_MAX)
            saturations += int(np.count_nonzero(clipped != v_new))
            v_mem[li] = clipped

            if model.layers[li].spiking:
                spikes = (v_mem[li] >= theta[li]).astype(np.int64)
                v_mem[li] = v_mem[li] - spikes * theta[li]
                spike_counts[li, t] = spikes.sum()
                x = spikes
            else:
                v_readout[t] = v_mem[li][0]

    return ReadoutTrace(v_readout, spike_counts,
                        synop_count=synops,
                        neuron_updates=neurons_total * n_steps,
                        saturation_events=saturations)


def predict(trace: ReadoutTrace, theta_readout: float) -> bool:
    """Target prediction: readout membrane peak reaches the threshold."""
    if len(trace.v_readout) == 0:
        raise ValueError("empty readout trace")
    return bool(np.max(trace.v_readout) >= theta_readout)

"""Integer engine tests: construction, single-neuron dynamics, the full
forward pass against a straight-line scalar oracle, and model file I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnkws.afe import EventRaster
from snnkws.errors import ConfigError, DataError
from snnkws.model import (INT16_MAX, INT16_MIN, NeuronStateInt, QuantizedLayer,
                          QuantizedModel, SynNetSpec, build_model, forward_int,
                          layer_tau_assignment, lif_step_int, predict)

from oracles import oracle_forward, random_quantized_model


# ---------------------------------------------------------------------------
# straight-line scalar oracle (plain Python ints, no numpy, no shared code)

# ---------------------------------------------------------------------------
# build_model

def test_tau_distribution_matches_architecture():
    taus = layer_tau_assignment(160, 2, 10.0)
    assert np.sum(taus == 20.0) == 80 and np.sum(taus == 40.0) == 80
    taus = layer_tau_assignment(60, 4, 10.0)
    for tau in (20.0, 40.0, 80.0, 160.0):
        assert np.sum(taus == tau) == 15


def test_tau_remainder_takes_longest():
    taus = layer_tau_assignment(10, 4, 10.0)
    assert np.sum(taus == 160.0) == 2 + 2   # 2 regular + 2 remainder


def test_single_tau_layer():
    model = build_model(SynNetSpec(hidden_widths=[4], tau_counts=[1]), seed=0)
    assert np.all(model.layers[0].d_syn == 1)      # 20 ms at dt 10 ms


def test_build_model_deterministic():
    spec = SynNetSpec(hidden_widths=[8, 4], tau_counts=[2, 2])
    m1 = build_model(spec, seed=42)
    m2 = build_model(spec, seed=42)
    for l1, l2 in zip(m1.layers, m2.layers):
        np.testing.assert_array_equal(l1.weights, l2.weights)


def test_default_spec_matches_deployed_topology():
    spec = SynNetSpec()
    assert spec.hidden_widths == [160, 60, 60, 60, 60, 60]
    assert spec.tau_counts == [2, 2, 4, 4, 8, 8]
    assert spec.total_neurons == 461
    model = build_model(spec, 0)
    l3 = model.layers[2]
    for d in (1, 2, 3, 4):                        # 20/40/80/160 ms dash codes
        assert np.sum(l3.d_syn == d) == 15


def test_non_power_of_two_tau_ratio_rejected():
    spec = SynNetSpec(hidden_widths=[4], tau_counts=[1], dt_ms=7.0)
    with pytest.raises(ConfigError, match="power of two"):
        build_model(spec, 0)


def test_invalid_spec_rejected():
    with pytest.raises(ConfigError):
        SynNetSpec(hidden_widths=[8], tau_counts=[3])      # not power of two
    with pytest.raises(ConfigError):
        SynNetSpec(hidden_widths=[2], tau_counts=[4])      # count > width
    with pytest.raises(ConfigError):
        SynNetSpec(hidden_widths=[8, 8], tau_counts=[2])   # length mismatch


# ---------------------------------------------------------------------------
# lif_step_int

def test_rest_state_is_fixed_point():
    state, spike = lif_step_int(NeuronStateInt(0, 0), 0, 1, 1, 100)
    assert (state.i_syn, state.v_mem, spike) == (0, 0, 0)


def test_dash_decay_halves_current():
    state, _ = lif_step_int(NeuronStateInt(1024, 0), 0, 1, 1, 32767)
    assert state.i_syn == 512


def test_threshold_subtract_reset():
    # v decays 100 -> 50, i_syn becomes 50, v = 50 + 50 = 100 = theta
    state, spike = lif_step_int(NeuronStateInt(0, 100), 50, 1, 1, 100)
    assert spike == 1
    assert state.v_mem == 0


def test_negative_shift_rounds_toward_zero():
    state, _ = lif_step_int(NeuronStateInt(-3, 0), 0, 1, 1, 100)
    assert state.i_syn == -2        # -3 - (-1), not -3 - (-2)


def test_decay_magnitude_non_increasing():
    # |i_syn| never grows under zero input; strictly decreases while the
    # shift is non-trivial (|x| >= 2^d)
    d = 2
    for start in (-30000, -5, 5, 30000):
        state = NeuronStateInt(start, 0)
        prev = abs(start)
        for _ in range(80):
            state, _ = lif_step_int(state, 0, d, 1, 32767)
            if prev >= (1 << d):
                assert abs(state.i_syn) < prev
            else:
                assert abs(state.i_syn) <= prev
            prev = abs(state.i_syn)
        assert prev < (1 << d)


def test_closed_form_decay_with_zero_input():
    # i_syn after k steps equals repeated application of x - (x >> d)
    x = 20000
    expected = x
    state = NeuronStateInt(x, 0)
    for _ in range(25):
        expected = expected - (expected >> 3)
        state, _ = lif_step_int(state, 0, 3, 1, 32767)
        assert state.i_syn == expected


# ---------------------------------------------------------------------------
# forward_int

def test_zero_raster_zero_trace():
    rng = np.random.default_rng(0)
    model = random_quantized_model(rng)
    raster = EventRaster(np.zeros((model.spec.input_channels, 30), dtype=int))
    trace = forward_int(model, raster)
    assert np.all(trace.v_readout == 0)
    assert trace.synop_count == 0
    assert trace.neuron_updates > 0


def test_single_event_impulse_response_matches_oracle():
    layers = [
        QuantizedLayer(np.array([[100]], dtype=np.int8), 1.0,
                       np.array([1], np.uint8), np.array([1], np.uint8),
                       np.array([32767], np.int16), spiking=False),
    ]
    spec = SynNetSpec(hidden_widths=[], tau_counts=[], input_channels=1)
    model = QuantizedModel(spec, layers)
    counts = np.zeros((1, 20), dtype=int)
    counts[0, 0] = 1
    trace = forward_int(model, EventRaster(counts))
    expected, _ = oracle_forward(model, counts.tolist())
    np.testing.assert_array_equal(trace.v_readout, expected)
    # double-exponential impulse response: nonzero peak, decays back toward 0
    assert trace.v_readout.max() > 0
    assert trace.v_readout[-1] < trace.v_readout.max()


def test_forward_int_matches_scalar_oracle_bit_exact():
    rng = np.random.default_rng(7)
    for _ in range(25):
        model = random_quantized_model(rng)
        counts = rng.integers(0, 3, size=(model.spec.input_channels, 20))
        trace = forward_int(model, EventRaster(counts))
        v_expected, synops_expected = oracle_forward(model, counts.tolist())
        np.testing.assert_array_equal(trace.v_readout, v_expected)
        assert trace.synop_count == synops_expected


def test_forward_int_shape_mismatch():
    rng = np.random.default_rng(0)
    model = random_quantized_model(rng, n_in=4)
    with pytest.raises(ValueError, match="channels"):
        forward_int(model, EventRaster(np.zeros((5, 10), dtype=int)))


def test_forward_int_deterministic():
    rng = np.random.default_rng(5)
    model = random_quantized_model(rng)
    counts = rng.integers(0, 5, size=(model.spec.input_channels, 30))
    t1 = forward_int(model, EventRaster(counts))
    t2 = forward_int(model, EventRaster(counts))
    np.testing.assert_array_equal(t1.v_readout, t2.v_readout)
    assert t1.synop_count == t2.synop_count


def test_saturation_clamps_never_wraps():
    # adversarial +-127 weights, dense input: states must stay in i16 range
    rng = np.random.default_rng(11)
    n_in = 8
    w = np.where(rng.random((n_in, 16)) < 0.5, -127, 127).astype(np.int8)
    layers = [
        QuantizedLayer(w, 1.0, np.ones(16, np.uint8), np.ones(16, np.uint8),
                       np.full(16, 30000, np.int16)),
        QuantizedLayer(np.full((16, 1), 127, np.int8), 1.0,
                       np.array([1], np.uint8), np.array([1], np.uint8),
                       np.array([32767], np.int16), spiking=False),
    ]
    spec = SynNetSpec(hidden_widths=[16], tau_counts=[1], input_channels=n_in)
    model = QuantizedModel(spec, layers, input_shift=8)
    counts = rng.integers(5, 20, size=(n_in, 30))
    trace = forward_int(model, EventRaster(counts))
    assert trace.saturation_events > 0
    assert np.all(trace.v_readout <= INT16_MAX)
    assert np.all(trace.v_readout >= INT16_MIN)
    # oracle (wide ints clamped to 16 bits) agrees exactly
    v_expected, _ = oracle_forward(model, counts.tolist())
    np.testing.assert_array_equal(trace.v_readout, v_expected)


def test_synop_count_brute_force():
    rng = np.random.default_rng(3)
    model = random_quantized_model(rng)
    counts = rng.integers(0, 4, size=(model.spec.input_channels, 15))
    trace = forward_int(model, EventRaster(counts))
    _, synops = oracle_forward(model, counts.tolist())
    assert trace.synop_count == synops


# ---------------------------------------------------------------------------
# predict

def test_predict_zero_trace_false():
    rng = np.random.default_rng(0)
    model = random_quantized_model(rng)
    raster = EventRaster(np.zeros((model.spec.input_channels, 10), dtype=int))
    assert predict(forward_int(model, raster), 1) is False


def test_predict_boundary_inclusive():
    from snnkws.model import ReadoutTrace
    trace = ReadoutTrace(np.array([0, 1000, 400]), np.zeros((0, 3)))
    assert predict(trace, 1000) is True
    assert predict(trace, 1001) is False


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-2000, 8000), min_size=1, max_size=40))
def test_predict_monotone_in_threshold(values):
    from snnkws.model import ReadoutTrace
    trace = ReadoutTrace(np.array(values), np.zeros((0, len(values))))
    prev = True
    for theta in range(-2500, 8500, 250):
        cur = predict(trace, theta)
        assert prev or not cur      # once False, never True again
        prev = cur


# ---------------------------------------------------------------------------
# serialization

def test_synq_round_trip(tmp_path):
    from snnkws.io import read_quantized_model, write_quantized_model
    rng = np.random.default_rng(1)
    model = random_quantized_model(rng, kappa_shift=3)
    path = tmp_path / "m.synq"
    write_quantized_model(path, model)
    loaded = read_quantized_model(path)
    assert loaded.input_shift == model.input_shift
    for l1, l2 in zip(model.layers, loaded.layers):
        np.testing.assert_array_equal(l1.weights, l2.weights)
        np.testing.assert_array_equal(l1.threshold, l2.threshold)
        np.testing.assert_array_equal(l1.d_syn, l2.d_syn)
    counts = rng.integers(0, 3, size=(model.spec.input_channels, 10))
    t1 = forward_int(model, EventRaster(counts))
    t2 = forward_int(loaded, EventRaster(counts))
    np.testing.assert_array_equal(t1.v_readout, t2.v_readout)


def test_synq_crc_detects_corruption(tmp_path):
    from snnkws.io import read_quantized_model, write_quantized_model
    rng = np.random.default_rng(2)
    model = random_quantized_model(rng)
    path = tmp_path / "m.synq"
    write_quantized_model(path, model)
    data = bytearray(path.read_bytes())
    data[15] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="CRC"):
        read_quantized_model(path)


def test_raster_round_trip(tmp_path):
    from snnkws.io import read_raster, write_raster
    rng = np.random.default_rng(4)
    raster = EventRaster(rng.integers(0, 100, size=(16, 30)), bin_ms=100.0)
    path = tmp_path / "r.evrs"
    write_raster(path, raster)
    loaded = read_raster(path)
    np.testing.assert_array_equal(loaded.counts, raster.counts)
    assert loaded.bin_ms == raster.bin_ms

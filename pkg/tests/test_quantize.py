"""Quantizer tests: scaling rule, invariances, round-trip bounds, and the
float-vs-integer audit."""

import numpy as np
import pytest

from snnkws.afe import EventRaster
from snnkws.errors import ConfigError
from snnkws.model import SynNetSpec, build_model, forward_int
from snnkws.quantize import audit, auto_kappa, dequantize, quantize
from snnkws.train import forward_float


def _small_model(seed=0):
    spec = SynNetSpec(hidden_widths=[8, 4], tau_counts=[2, 2], input_channels=4)
    return build_model(spec, seed)


def test_scale_rule_example():
    model = _small_model()
    model.layers[0].weights[:] = 0.0
    model.layers[0].weights[0, :3] = [-1.0, 0.5, 1.0]
    qm = quantize(model, kappa=1)
    assert qm.layers[0].scale == pytest.approx(127.0)
    np.testing.assert_array_equal(qm.layers[0].weights[0, :3], [-127, 64, 127])


def test_uniform_weights_map_to_127():
    for c in (0.01, 1.0, 17.3):
        model = _small_model()
        for layer in model.layers:
            layer.weights[:] = c
        qm = quantize(model, kappa=1)
        for ql in qm.layers:
            assert np.all(ql.weights == 127)


def test_per_layer_scale_invariance():
    model = _small_model(seed=3)
    qm1 = quantize(model, kappa=4)
    scaled = model.copy()
    scaled.layers[1].weights *= 37.5
    qm2 = quantize(scaled, kappa=4)
    np.testing.assert_array_equal(qm1.layers[1].weights, qm2.layers[1].weights)


def test_quantize_idempotent():
    model = _small_model(seed=5)
    kappa = auto_kappa(model)
    qm1 = quantize(model, kappa)
    qm2 = quantize(dequantize(qm1), kappa)
    for l1, l2 in zip(qm1.layers, qm2.layers):
        np.testing.assert_array_equal(l1.weights, l2.weights)


def test_round_trip_error_bound():
    model = _small_model(seed=7)
    qm = quantize(model, kappa=4)
    for fl, ql in zip(model.layers, qm.layers):
        err = np.abs(fl.weights - ql.weights.astype(float) / ql.scale)
        assert np.all(err <= 0.5 / ql.scale + 1e-12)


def test_all_zero_layer_rejected():
    model = _small_model()
    model.layers[1].weights[:] = 0.0
    with pytest.raises(ConfigError, match="all-zero"):
        quantize(model, kappa=1)


def test_threshold_overflow_suggests_smaller_kappa():
    model = _small_model()
    model.layers[0].weights *= 1e-3      # huge scale
    with pytest.raises(ConfigError, match="kappa"):
        quantize(model, kappa=256)


def test_invalid_kappa_rejected():
    with pytest.raises(ConfigError):
        quantize(_small_model(), kappa=3)


def test_auto_kappa_keeps_thresholds_representable():
    model = _small_model(seed=1)
    kappa = auto_kappa(model)
    qm = quantize(model, kappa)
    assert all(np.all(np.abs(ql.threshold.astype(int)) <= 4096)
               for ql in qm.layers)


# ---------------------------------------------------------------------------
# audit

def _random_rasters(rng, channels, n=6):
    return [(EventRaster(rng.integers(0, 3, size=(channels, 30))),
             int(rng.integers(0, 2))) for _ in range(n)]


def test_audit_identical_model_zero_gap():
    rng = np.random.default_rng(0)
    model = _small_model(seed=2)
    kappa = auto_kappa(model)
    qm = quantize(model, kappa)
    exact = dequantize(qm)               # exactly representable weights
    report = audit(exact, qm, _random_rasters(rng, 4))
    assert report.accuracy_gap == pytest.approx(0.0, abs=1e-12)


def test_audit_topology_mismatch():
    model = _small_model()
    other = build_model(SynNetSpec(hidden_widths=[6], tau_counts=[2],
                                   input_channels=4), 0)
    with pytest.raises(ValueError, match="topology"):
        audit(model, quantize(other, 4), [])


def test_int_float_readout_consistency_no_saturation():
    # exactly representable weights, moderate input: per-step divergence of
    # the scaled integer readout stays within the 2-LSB-per-step bound
    rng = np.random.default_rng(4)
    checked = 0
    for trial in range(30):
        spec = SynNetSpec(
            hidden_widths=[int(rng.integers(2, 12))], tau_counts=[2],
            input_channels=int(rng.integers(2, 6)))
        model = build_model(spec, int(rng.integers(1e6)))
        kappa = auto_kappa(model)
        qm = quantize(model, kappa)
        exact = dequantize(qm)
        counts = rng.integers(0, 3, size=(spec.input_channels, 30))
        trace_i = forward_int(qm, EventRaster(counts))
        if trace_i.saturation_events:
            continue
        trace_f = forward_float(exact, EventRaster(counts))
        # skip near-threshold ambiguity: spike decisions must be robust
        if _near_threshold(exact, EventRaster(counts), margin=0.01):
            continue
        S = qm.layers[-1].scale * (1 << qm.input_shift)
        diff_lsb = np.abs(trace_i.v_readout / S - trace_f.v_readout) * S
        bound = 2.0 * (np.arange(30) + 1)
        assert np.all(diff_lsb <= bound)
        checked += 1
    assert checked >= 10


def _near_threshold(model, raster, margin):
    from snnkws.train import _forward_batch
    X = raster.counts.T[np.newaxis].astype(np.float64)
    _, _, cache = _forward_batch(model, X, retain=True)
    for u, layer in zip(cache["u"], model.layers[:-1]):
        if np.any(np.abs(u - layer.threshold) < margin):
            return True
    return False

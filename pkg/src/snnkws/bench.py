"""Dataset ingestion, evaluation metrics, ROC, throughput and the modeled
energy accounting.

Energy figures are produced by an operation-counting model with calibrated
coefficients; they are always labeled "modeled" and never represent a
hardware measurement.  One inference = 10 network timesteps.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as io_
from .afe import AudioClip, EncoderConfig, EventRaster, FilterbankConfig, encode_clip
from .errors import DataError
from .model import QuantizedModel, ReadoutTrace, forward_int, predict

log = logging.getLogger(__name__)

TIMESTEPS_PER_INFERENCE = 10
TOOL_VERSION = "snnkws-0.1.0"


@dataclass
class EnergyModelParams:
    """Coefficients of the op-counting energy model (see scripts/fit_energy.py).

    Defaults are calibrated so that SynNet topologies in the 221-461 neuron
    range, at real-time streaming rates, land in a ~250-300 uW dynamic-power
    band.  Modeled values, not measurements.
    """

    idle_power_uw: float = 216.0
    energy_per_synop_nj: float = 0.01
    energy_per_neuron_update_nj: float = 6.5
    timestep_overhead_nj: float = 24_000.0

    def __post_init__(self):
        if min(self.idle_power_uw, self.energy_per_synop_nj,
               self.energy_per_neuron_update_nj, self.timestep_overhead_nj) < 0:
            raise ValueError("energy model coefficients must be >= 0")


@dataclass
class EnergyReport:
    dynamic_power_uw: float
    dynamic_energy_uj_per_inf: float
    active_energy_uj_per_inf: float
    provenance: str = "modeled (op-counting, calibrated coefficients)"


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    tpr: float
    fpr: float
    roc: list[tuple[float, float, float]] = field(default_factory=list)
    inferences_per_s: float = float("nan")       # wall-clock, filled by bench
    realtime_inferences_per_s: float = float("nan")
    synops_per_inference: float = float("nan")
    energy: EnergyReport | None = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


# ---------------------------------------------------------------------------
# dataset

def load_dataset(manifest_path) -> list[tuple[AudioClip, int]]:
    """Load a "path<TAB>label" manifest into (clip, label) pairs.

    Paths are resolved relative to the manifest's directory.  All per-file
    problems are collected and reported together.
    """
    manifest_path = str(manifest_path)
    if not os.path.exists(manifest_path):
        raise DataError(f"manifest not found: {manifest_path}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    entries = []
    problems = []
    with open(manifest_path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                problems.append(f"line {ln}: expected 'path<TAB>label'")
                continue
            path, label = parts
            if label not in ("0", "1"):
                problems.append(f"line {ln}: label {label!r} not in {{0,1}}")
                continue
            full = path if os.path.isabs(path) else os.path.join(base, path)
            if not os.path.exists(full):
                problems.append(f"line {ln}: missing file {full}")
                continue
            try:
                entries.append((io_.read_wav(full), int(label)))
            except DataError as e:
                problems.append(f"line {ln}: {e}")
    if problems:
        raise DataError("manifest errors:\n  " + "\n  ".join(problems))
    if not entries:
        log.warning("manifest %s is empty", manifest_path)
    return entries


def _worker_count() -> int:
    cap = os.environ.get("SNNKWS_THREADS")
    if cap:
        return max(1, int(cap))
    return min(8, os.cpu_count() or 1)


def encode_dataset(dataset: list[tuple[AudioClip, int]],
                   fb_config: FilterbankConfig | None = None,
                   enc_config: EncoderConfig | None = None,
                   bin_ms: float = 100.0,
                   duration_s: float = 3.0) -> list[tuple[EventRaster, int]]:
    """Encode audio clips into rasters (parallel across clips, stable order)."""
    def one(item):
        clip, label = item
        return encode_clip(clip, fb_config, enc_config, bin_ms, duration_s), label

    n = _worker_count()
    if n == 1 or len(dataset) < 4:
        return [one(item) for item in dataset]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, dataset))


# ---------------------------------------------------------------------------
# evaluation

def _peaks_and_stats(q_model: QuantizedModel,
                     rasters: list[EventRaster]) -> tuple[np.ndarray, list[ReadoutTrace]]:
    def one(r):
        return forward_int(q_model, r)

    n = _worker_count()
    if n == 1 or len(rasters) < 4:
        traces = [one(r) for r in rasters]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            traces = list(pool.map(one, rasters))
    peaks = np.array([int(np.max(t.v_readout)) for t in traces])
    return peaks, traces


def _confusion(peaks: np.ndarray, labels: np.ndarray, threshold: float):
    pred = peaks >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return tp, fp, tn, fn


def _metrics(tp, fp, tn, fn):
    total = tp + fp + tn + fn
    tpr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    acc = (tp + tn) / total if total else 0.0
    return acc, tpr, fpr


def evaluate(q_model: QuantizedModel, dataset: list[tuple[EventRaster, int]],
             theta_readout: float | None = None,
             energy_params: EnergyModelParams | None = None,
             roc_grid_size: int = 256) -> EvalReport:
    """Confusion matrix, derived metrics, ROC and modeled energy.

    theta_readout defaults to the model's trained readout threshold, which
    reproduces the "any readout events" prediction rule.  All reported
    figures are deterministic (no wall-clock timing here).
    """
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    rasters = [r for r, _ in dataset]
    labels = np.array([y for _, y in dataset])
    if theta_readout is None:
        theta_readout = q_model.readout_threshold

    peaks, traces = _peaks_and_stats(q_model, rasters)
    tp, fp, tn, fn = _confusion(peaks, labels, theta_readout)
    acc, tpr, fpr = _metrics(tp, fp, tn, fn)

    grid = default_threshold_grid(peaks, roc_grid_size)
    roc_points = roc_from_peaks(peaks, labels, grid)

    total_steps = sum(r.timesteps for r in rasters)
    inferences = total_steps / TIMESTEPS_PER_INFERENCE
    synops = sum(t.synop_count for t in traces)
    updates = sum(t.neuron_updates for t in traces)
    bin_ms = rasters[0].bin_ms
    duration_s = total_steps * bin_ms / 1000.0
    realtime_rate = inferences / duration_s

    report = EvalReport(tp, fp, tn, fn, acc, tpr, fpr, roc=roc_points,
                        realtime_inferences_per_s=realtime_rate,
                        synops_per_inference=synops / inferences)
    params = energy_params or EnergyModelParams()
    report.energy = estimate_energy(
        synops=synops, neuron_updates=updates, timesteps=total_steps,
        duration_s=duration_s, params=params, inference_rate=realtime_rate)
    return report


def default_threshold_grid(peaks: np.ndarray, size: int = 256) -> np.ndarray:
    """size thresholds spanning [0, max peak * 1.05]."""
    top = float(np.max(peaks)) * 1.05 if len(peaks) else 1.0
    return np.linspace(0.0, max(top, 1.0), size)


def roc_from_peaks(peaks: np.ndarray, labels: np.ndarray,
                   grid: np.ndarray) -> list[tuple[float, float, float]]:
    points = []
    for theta in grid:
        tp, fp, tn, fn = _confusion(peaks, labels, theta)
        _, tpr, fpr = _metrics(tp, fp, tn, fn)
        points.append((float(theta), tpr, fpr))
    return points


def roc(q_model: QuantizedModel, dataset: list[tuple[EventRaster, int]],
        threshold_grid: np.ndarray) -> list[tuple[float, float, float]]:
    """One (threshold, tpr, fpr) per grid entry from cached per-sample peaks."""
    grid = np.asarray(threshold_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("threshold grid must be sorted ascending")
    rasters = [r for r, _ in dataset]
    labels = np.array([y for _, y in dataset])
    peaks, _ = _peaks_and_stats(q_model, rasters)
    return roc_from_peaks(peaks, labels, grid)


def roc_auc(points: list[tuple[float, float, float]]) -> float:
    """Trapezoidal area under the (fpr, tpr) curve."""
    fprs = np.array([p[2] for p in points])
    tprs = np.array([p[1] for p in points])
    order = np.argsort(fprs)
    return float(np.trapezoid(tprs[order], fprs[order]))


# ---------------------------------------------------------------------------
# throughput and energy

@dataclass
class ThroughputResult:
    inferences_per_s: float          # wall-clock, median over repeats
    realtime_inferences_per_s: float
    synops_per_inference: float
    neuron_updates_per_inference: float
    timesteps: int


def throughput_bench(q_model: QuantizedModel, raster: EventRaster,
                     repeats: int = 5) -> ThroughputResult:
    """Wall-clock forward_int timing; single-threaded, per-core figures."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    durations = []
    trace = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = forward_int(q_model, raster)
        durations.append(time.perf_counter() - t0)
    inferences = raster.timesteps / TIMESTEPS_PER_INFERENCE
    wall = float(np.median(durations))
    realtime_s = raster.timesteps * raster.bin_ms / 1000.0
    return ThroughputResult(
        inferences_per_s=inferences / wall,
        realtime_inferences_per_s=inferences / realtime_s,
        synops_per_inference=trace.synop_count / inferences,
        neuron_updates_per_inference=trace.neuron_updates / inferences,
        timesteps=raster.timesteps,
    )


def estimate_energy(synops: float, neuron_updates: float, timesteps: float,
                    duration_s: float, params: EnergyModelParams,
                    inference_rate: float) -> EnergyReport:
    """Op-counting energy model.  All outputs are modeled, not measured."""
    if inference_rate <= 0:
        raise ValueError("inference_rate must be positive")
    total_nj = (synops * params.energy_per_synop_nj
                + neuron_updates * params.energy_per_neuron_update_nj
                + timesteps * params.timestep_overhead_nj)
    dynamic_power_uw = total_nj / duration_s / 1000.0
    dynamic_uj_per_inf = dynamic_power_uw / inference_rate
    active_uj_per_inf = (dynamic_power_uw + params.idle_power_uw) / inference_rate
    return EnergyReport(dynamic_power_uw, dynamic_uj_per_inf, active_uj_per_inf)


# ---------------------------------------------------------------------------
# report output

def _config_hash(meta: dict) -> str:
    blob = repr(sorted(meta.items())).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def report_header(seed, meta: dict | None = None) -> str:
    meta = dict(meta or {})
    meta.setdefault("seed", seed)
    return (f"# tool={TOOL_VERSION} seed={seed} "
            f"config_hash={_config_hash(meta)}\n")


def write_eval_report(prefix, report: EvalReport, seed=0, meta=None):
    """Write <prefix>.csv and <prefix>.txt; returns the two paths."""
    header = report_header(seed, meta)
    csv_path, txt_path = f"{prefix}.csv", f"{prefix}.txt"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(header)
        f.write("metric,value\n")
        f.write(f"accuracy,{report.accuracy:.6g}\n")
        f.write(f"tpr,{report.tpr:.6g}\n")
        f.write(f"fpr,{report.fpr:.6g}\n")
        f.write(f"tp,{report.tp}\nfp,{report.fp}\ntn,{report.tn}\nfn,{report.fn}\n")
        f.write(f"realtime_inferences_per_s,{report.realtime_inferences_per_s:.6g}\n")
        f.write(f"synops_per_inference,{report.synops_per_inference:.6g}\n")
        if report.energy:
            f.write(f"dynamic_power_uw_modeled,{report.energy.dynamic_power_uw:.6g}\n")
            f.write(f"dynamic_energy_uj_per_inf_modeled,"
                    f"{report.energy.dynamic_energy_uj_per_inf:.6g}\n")
            f.write(f"active_energy_uj_per_inf_modeled,"
                    f"{report.energy.active_energy_uj_per_inf:.6g}\n")
    with open(txt_path, "w", encoding="utf-8") as f:
        f.write(header)
        f.write(f"samples: {report.total}\n")
        f.write(f"accuracy: {100 * report.accuracy:.2f}%  "
                f"TPR: {100 * report.tpr:.2f}%  FPR: {100 * report.fpr:.2f}%\n")
        f.write(f"confusion: TP={report.tp} FP={report.fp} "
                f"TN={report.tn} FN={report.fn}\n")
        f.write(f"synops/inference: {report.synops_per_inference:.1f}\n")
        if report.energy:
            f.write(f"dynamic power [modeled]: "
                    f"{report.energy.dynamic_power_uw:.1f} uW\n")
            f.write(f"dynamic energy/inf [modeled]: "
                    f"{report.energy.dynamic_energy_uj_per_inf:.2f} uJ\n")
            f.write(f"active energy/inf [modeled]: "
                    f"{report.energy.active_energy_uj_per_inf:.2f} uJ\n")
    return csv_path, txt_path


def write_roc_csv(path, points, seed=0, meta=None):
    with open(path, "w", encoding="utf-8") as f:
        f.write(report_header(seed, meta))
        f.write("threshold,tpr,fpr\n")
        for theta, tpr, fpr in points:
            f.write(f"{theta:.6g},{tpr:.6g},{fpr:.6g}\n")

"""Command-line interface.

Subcommands: encode, train, quantize, eval, roc, bench, synth.
Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench as bench_
from . import io as io_
from . import synth as synth_
from .afe import EncoderConfig, FilterbankConfig
from .errors import ConfigError, DataError
from .model import SynNetSpec
from .quantize import audit as quantize_audit, auto_kappa
from .quantize import quantize as quantize_model
from .train import TrainConfig, train as train_model, write_loss_curve

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snnkws",
                description="Spiking keyword-spotting pipeline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt-ms", type=float, default=10.0,
                   help="network timestep used for decay codes")
    p.add_argument("--bin-ms", type=float, default=100.0)
    p.add_argument("--config", type=str, default=None,
                   help="JSON file overriding defaults")
    p.add_argument("--out", type=str, default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="WAV file -> event raster file")
    enc.add_argument("wav")
    enc.add_argument("raster", help="output .evrs path")
    enc.add_argument("--gain-db", type=int, default=12, choices=(0, 6, 12))
    enc.add_argument("--duration-s", type=float, default=3.0)
    enc.add_argument("--encoder-tau-ms", type=float, default=10.0)
    enc.add_argument("--encoder-threshold", type=float, default=1.0)

    tr = sub.add_parser("train", help="train a float model from a manifest")
    tr.add_argument("manifest")
    tr.add_argument("--hidden", type=str, default="32,16",
                    help="comma-separated layer widths")
    tr.add_argument("--taus", type=str, default="2,2",
                    help="comma-separated time-constant counts")
    tr.add_argument("--epochs", type=int, default=300)
    tr.add_argument("--learning-rate", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--surrogate-slope", type=float, default=2.0)
    tr.add_argument("--gain-db", type=int, default=12, choices=(0, 6, 12))

    qu = sub.add_parser("quantize", help="float model -> deployable SYNQ")
    qu.add_argument("model", help="SYNF float model path")
    qu.add_argument("--kappa", type=int, default=None,
                    help="state headroom factor (power of two); auto if unset")

    ev = sub.add_parser("eval", help="evaluate a quantized model")
    ev.add_argument("model", help="SYNQ model path")
    ev.add_argument("manifest")
    ev.add_argument("--gain-db", type=int, default=12, choices=(0, 6, 12))
    ev.add_argument("--threshold", type=float, default=None)

    rc = sub.add_parser("roc", help="ROC sweep for a quantized model")
    rc.add_argument("model")
    rc.add_argument("manifest")
    rc.add_argument("--gain-db", type=int, default=12, choices=(0, 6, 12))
    rc.add_argument("--grid-size", type=int, default=256)

    be = sub.add_parser("bench", help="throughput and modeled energy")
    be.add_argument("model")
    be.add_argument("raster", help=".evrs raster to stream repeatedly")
    be.add_argument("--repeats", type=int, default=5)

    sy = sub.add_parser("synth", help="generate the synthetic two-class corpus")
    sy.add_argument("directory")
    sy.add_argument("--n-train", type=int, default=400)
    sy.add_argument("--n-test", type=int, default=100)
    return p


def _load_config_overrides(args):
    if not args.config:
        return {}
    with open(args.config, encoding="utf-8") as f:
        return json.load(f)


def _encoded_dataset(manifest, args, overrides):
    fb = FilterbankConfig(gain_db=getattr(args, "gain_db", 12))
    enc = EncoderConfig(**{k: v for k, v in overrides.items()
                           if k in ("encoder_tau_ms", "encoder_threshold")})
    clips = bench_.load_dataset(manifest)
    return bench_.encode_dataset(clips, fb, enc, bin_ms=args.bin_ms)


def _cmd_encode(args, overrides):
    clip = io_.read_wav(args.wav)
    from .afe import encode_clip
    fb = FilterbankConfig(gain_db=args.gain_db)
    enc = EncoderConfig(args.encoder_tau_ms, args.encoder_threshold)
    raster = encode_clip(clip, fb, enc, args.bin_ms, args.duration_s)
    io_.write_raster(args.raster, raster)
    print(f"wrote {args.raster}: {raster.channels} channels x "
          f"{raster.timesteps} steps, {int(raster.counts.sum())} events")
    return 0


def _cmd_train(args, overrides):
    hidden = [int(x) for x in args.hidden.split(",") if x]
    taus = [int(x) for x in args.taus.split(",") if x]
    spec = SynNetSpec(hidden_widths=hidden, tau_counts=taus, dt_ms=args.dt_ms)
    cfg = TrainConfig(epochs=args.epochs,
                      learning_rate=args.learning_rate,
                      batch_size=args.batch_size,
                      surrogate_slope=args.surrogate_slope,
                      seed=args.seed)
    dataset = _encoded_dataset(args.manifest, args, overrides)
    model, history = train_model(spec, dataset, cfg)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.synf")
    io_.write_float_model(model_path, model)
    write_loss_curve(os.path.join(args.out, "loss_curve.csv"), history)
    print(f"wrote {model_path} (best val loss "
          f"{min(h.val_loss for h in history):.5f})")
    return 0


def _cmd_quantize(args, overrides):
    model = io_.read_float_model(args.model)
    kappa = args.kappa if args.kappa is not None else auto_kappa(model)
    q_model = quantize_model(model, kappa)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "model.synq")
    io_.write_quantized_model(out_path, q_model)
    report = quantize_audit(model, q_model, [])
    print(f"wrote {out_path} (kappa={kappa}, scales="
          f"{[f'{s:.1f}' for s in report.scales]})")
    return 0


def _cmd_eval(args, overrides):
    q_model = io_.read_quantized_model(args.model)
    dataset = _encoded_dataset(args.manifest, args, overrides)
    report = bench_.evaluate(q_model, dataset, theta_readout=args.threshold)
    os.makedirs(args.out, exist_ok=True)
    meta = {"model": os.path.basename(args.model), "bin_ms": args.bin_ms,
            "gain_db": args.gain_db}
    csv_path, txt_path = bench_.write_eval_report(
        os.path.join(args.out, "eval_report"), report, args.seed, meta)
    print(open(txt_path, encoding="utf-8").read().rstrip())
    return 0


def _cmd_roc(args, overrides):
    q_model = io_.read_quantized_model(args.model)
    dataset = _encoded_dataset(args.manifest, args, overrides)
    rasters = [r for r, _ in dataset]
    labels = np.array([y for _, y in dataset])
    peaks, _ = bench_._peaks_and_stats(q_model, rasters)
    grid = bench_.default_threshold_grid(peaks, args.grid_size)
    points = bench_.roc_from_peaks(peaks, labels, grid)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "roc.csv")
    bench_.write_roc_csv(path, points, args.seed,
                         {"model": os.path.basename(args.model)})
    print(f"wrote {path} (AUC {bench_.roc_auc(points):.4f})")
    return 0


def _cmd_bench(args, overrides):
    q_model = io_.read_quantized_model(args.model)
    raster = io_.read_raster(args.raster)
    result = bench_.throughput_bench(q_model, raster, args.repeats)
    params = bench_.EnergyModelParams()
    energy = bench_.estimate_energy(
        synops=result.synops_per_inference,
        neuron_updates=result.neuron_updates_per_inference,
        timesteps=bench_.TIMESTEPS_PER_INFERENCE,
        duration_s=bench_.TIMESTEPS_PER_INFERENCE * raster.bin_ms / 1000.0,
        params=params,
        inference_rate=result.realtime_inferences_per_s)
    print(f"timesteps: {result.timesteps} "
          f"({result.timesteps / bench_.TIMESTEPS_PER_INFERENCE:.0f} inferences)")
    print(f"wall-clock rate: {result.inferences_per_s:.1f} Inf/s  "
          f"real-time rate: {result.realtime_inferences_per_s:.2f} Inf/s")
    print(f"synops/inference: {result.synops_per_inference:.0f}")
    print(f"dynamic power [modeled]: {energy.dynamic_power_uw:.1f} uW")
    print(f"dynamic energy/inf [modeled]: "
          f"{energy.dynamic_energy_uj_per_inf:.2f} uJ")
    print(f"active energy/inf [modeled]: "
          f"{energy.active_energy_uj_per_inf:.2f} uJ")
    return 0


def _cmd_synth(args, overrides):
    train_m, test_m = synth_.write_corpus(args.directory, args.n_train,
                                          args.n_test, seed=args.seed or 1234)
    print(f"wrote {train_m} and {test_m}")
    return 0


_COMMANDS = {
    "encode": _cmd_encode,
    "train": _cmd_train,
    "quantize": _cmd_quantize,
    "eval": _cmd_eval,
    "roc": _cmd_roc,
    "bench": _cmd_bench,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _load_config_overrides(args)
        return _COMMANDS[args.command](args, overrides)
    except (ConfigError, ValueError, _UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Derive and sanity-check the default energy-model coefficients.

The benchmark harness models dynamic power as

    P_dyn [uW] = (synops * e_synop + updates * e_update + steps * overhead)
                 [nJ] / duration [s] / 1000

with per-step neuron updates equal to the neuron count.  This script solves
for coefficients that place the reference topologies (221 to 461 neurons,
streaming in real time at 10 steps/s) inside a 251-298 uW dynamic-power band
with per-inference active energy in the 2.4-7.3 uJ range, then prints the
modeled figures for each topology at a configurable activity level.

Usage: python3 scripts/fit_energy.py [--in-rate R] [--hidden-rate R]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from snnkws.bench import EnergyModelParams, estimate_energy  # noqa: E402

# hidden-layer widths of the reference topologies (readout neuron excluded)
TOPOLOGIES = [
    [120, 20, 20, 20, 20, 20],
    [130, 30, 30, 30, 30, 30],
    [140, 40, 40, 40, 40, 40],
    [60, 60, 60, 60, 60, 60],
    [150, 50, 50, 50, 50, 50],
    [110, 60, 60, 60, 60, 60],
    [160, 60, 60, 60, 60, 60],
]

STEPS_PER_S = 10.0          # 100 ms bins, real time
STEPS = 30                  # one 3 s sample
TARGET_BAND_UW = (251.0, 298.0)


def synops_per_step(widths, in_rate, hidden_rate):
    fan = widths + [1]
    total = in_rate * widths[0]
    for a, b in zip(fan, fan[1:]):
        total += hidden_rate * a * b
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in-rate", type=float, default=1.3,
                    help="input events per step (all channels)")
    ap.add_argument("--hidden-rate", type=float, default=0.13,
                    help="hidden spikes per neuron per step")
    args = ap.parse_args()

    # The band midpoint is ~275 uW and the neuron-count spread is 240.  With
    # e_update carrying the size dependence, the power spread across sizes is
    # e_update * 240 * STEPS_PER_S / 1000 uW; e_update = 6.5 nJ gives a
    # 15.6 uW spread, comfortably inside the 47 uW band.  The per-step
    # overhead then sets the base level: 24000 nJ * 10 /s = 240 uW.  Synop
    # energy is kept small (0.01 nJ) so activity shifts power by < 2 uW at
    # realistic sparsity, mirroring a memory-dominated step cost.
    params = EnergyModelParams()
    print(f"coefficients: overhead={params.timestep_overhead_nj} nJ/step, "
          f"e_update={params.energy_per_neuron_update_nj} nJ, "
          f"e_synop={params.energy_per_synop_nj} nJ, "
          f"idle={params.idle_power_uw} uW")

    lo, hi = TARGET_BAND_UW
    in_band = 0
    for widths in TOPOLOGIES:
        n = sum(widths) + 1
        sps = synops_per_step(widths, args.in_rate, args.hidden_rate)
        rep = estimate_energy(synops=sps * STEPS, neuron_updates=n * STEPS,
                              timesteps=STEPS, duration_s=STEPS / STEPS_PER_S,
                              params=params, inference_rate=1.0)
        ok = lo <= rep.dynamic_power_uw <= hi
        in_band += ok
        print(f"  {n:4d} neurons: {rep.dynamic_power_uw:6.1f} uW dynamic "
              f"({sps:8.0f} synops/step) {'ok' if ok else 'OUT OF BAND'}")
    print(f"{in_band}/{len(TOPOLOGIES)} topologies in "
          f"[{lo:.0f}, {hi:.0f}] uW (need >= 5)")
    return 0 if in_band >= 5 else 1


if __name__ == "__main__":
    sys.exit(main())

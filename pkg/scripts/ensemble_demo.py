#!/usr/bin/env python3
"""Ensemble demo: simulated classifier outputs on a shared candidate list.

Builds a synthetic reference (many scans, several nodules each, plus decoy
candidates), simulates a handful of imperfect classifiers with different
noise levels and blind spots on the shared candidate list, then sweeps all
system combinations with probability averaging and reports the CPM table and
a FROC plot of the best single system vs the best combination.
"""

import argparse
import os
import sys

import numpy as np

from nodulekit import reports
from nodulekit.ensemble import PredictionSet, ensemble_sweep
from nodulekit.froc import CadMark, evaluate_marks
from nodulekit.reference import ReferenceNodule


def build_world(rng, n_scans=30, nodules_per_scan=3, decoys_per_scan=25):
    positives, candidates = [], []
    for i in range(n_scans):
        scan = f"scan-{i:03d}"
        for j in range(nodules_per_scan):
            center = (float(40 * j), float(10 * i % 97), 0.0)
            positives.append(ReferenceNodule(scan, center, 8.0, 3, ()))
            candidates.append((scan, center, True))
        for k in range(decoys_per_scan):
            center = (float(rng.uniform(300, 900)), float(rng.uniform(0, 100)), 0.0)
            candidates.append((scan, center, False))
    return positives, candidates


def simulate_system(rng, candidates, noise, blind_fraction):
    """Noisy probabilities: nodules high, decoys low, some nodules missed."""
    probs = {}
    for scan, center, is_nodule in candidates:
        if is_nodule:
            base = 0.2 if rng.uniform() < blind_fraction else 0.85
        else:
            base = 0.15
        probs[(scan, center)] = float(np.clip(base + rng.normal(0, noise), 0.0, 1.0))
    return probs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--systems", type=int, default=4)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--pvalues", action="store_true")
    parser.add_argument("--out", default="ensemble_demo_out")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    positives, candidates = build_world(rng)
    scan_ids = sorted({scan for scan, _, _ in candidates})

    sets = []
    for s in range(args.systems):
        probs = simulate_system(rng, candidates, noise=0.12 + 0.03 * s, blind_fraction=0.1)
        sets.append(PredictionSet(f"sys{s}", probs))

    sweep = ensemble_sweep(
        sets, positives, [], scan_ids,
        n_boot=500 if args.pvalues else None, seed=args.seed,
    )
    rates = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    reports.write_ensemble_csv(sweep, rates, os.path.join(args.out, "ensemble_report.csv"))

    singles = [r for r in sweep if r.bitmask.count("1") == 1]
    best_single = max(singles, key=lambda r: r.cpm)
    best_combo = max(sweep, key=lambda r: r.cpm)
    print(f"best single system: {best_single.systems[0]} CPM {best_single.cpm:.3f}")
    print(f"best combination:   {'+'.join(best_combo.systems)} CPM {best_combo.cpm:.3f}")

    curves = {}
    for label, row in (("best single", best_single), ("best combination", best_combo)):
        members = [s for s in sets if s.name in row.systems]
        averaged = {}
        for key in members[0].probabilities:
            averaged[key] = float(np.mean([m.probabilities[key] for m in members]))
        marks = [CadMark(scan, center, p) for (scan, center), p in averaged.items()]
        curve, report = evaluate_marks(marks, positives, [], scan_ids, n_boot=500, seed=args.seed)
        curves[f"{label} ({'+'.join(row.systems)})"] = (curve, report)
    reports.plot_froc(curves, os.path.join(args.out, "froc.svg"))
    print(f"table and plot written to {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())

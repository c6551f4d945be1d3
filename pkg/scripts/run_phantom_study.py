#!/usr/bin/env python3
"""Phantom detection study: generate volumes, detect, merge, score.

Generates a configurable batch of randomized phantoms (solid spheres,
subsolid spheres, vessel distractors), runs the large and subsolid detectors,
merges their candidate lists, turns merged candidates into scored predictions
(suspicion = saturating function of cluster size) and pushes everything
through the FROC evaluation, writing the usual report files.

Example:
    python3 scripts/run_phantom_study.py --phantoms 10 --out study_out
"""

import argparse
import os
import sys
import time

import numpy as np

from nodulekit import csvio, reports
from nodulekit.combine import CandidateList, combination_sweep, merge_candidates
from nodulekit.detect import detect_large, detect_subsolid
from nodulekit.froc import CadMark, evaluate_marks
from nodulekit.phantom import generate_phantom, random_study_spec
from nodulekit.reference import ReferenceNodule


def suspicion(cluster_size: int, scale: float = 300.0) -> float:
    return float(1.0 - np.exp(-cluster_size / scale))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--phantoms", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-boot", type=int, default=500)
    parser.add_argument("--out", default="phantom_study_out")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    start = time.time()

    positives: list[ReferenceNodule] = []
    large_list = CandidateList("large", [])
    subsolid_list = CandidateList("subsolid", [])
    scan_ids = []
    masks = {}

    for i in range(args.phantoms):
        spec, solids, subsolids = random_study_spec(args.seed + i)
        result = generate_phantom(spec)
        scan_ids.append(spec.series_id)
        masks[spec.series_id] = result.mask
        for row in result.annotations:
            positives.append(
                ReferenceNodule(row.seriesuid, row.center, row.diameter_mm, 4, ())
            )
        large_list.candidates.extend(detect_large(result.volume, result.mask, spec.series_id))
        subsolid_list.candidates.extend(
            detect_subsolid(result.volume, result.mask, spec.series_id)
        )
        print(f"{spec.series_id}: {len(solids)} solid + {len(subsolids)} subsolid inserts")

    sweep = combination_sweep([large_list, subsolid_list], positives, scan_ids, masks=masks)
    reports.write_combination_csv(sweep, os.path.join(args.out, "combination_report.csv"))
    for row in sweep:
        print(
            f"  sources {'+'.join(row.sources):17s} sensitivity {row.sensitivity:.3f} "
            f"({row.total_candidates} candidates, {row.average_per_scan:.1f}/scan)"
        )

    merged = merge_candidates([large_list, subsolid_list], masks=masks)
    csvio.write_candidates_csv(merged.candidates, os.path.join(args.out, "merged_candidates.csv"))
    marks = [
        CadMark(c.seriesuid, c.center, suspicion(c.cluster_size or 1))
        for c in merged.candidates
    ]
    csvio.write_predictions_csv(marks, os.path.join(args.out, "predictions.csv"))
    csvio.write_positives_csv(positives, os.path.join(args.out, "positives.csv"))

    curve, report = evaluate_marks(
        marks, positives, [], scan_ids, n_boot=args.n_boot, seed=args.seed
    )
    reports.write_froc_csv(curve, os.path.join(args.out, "froc_points.csv"))
    reports.write_cpm_csv(report, os.path.join(args.out, "cpm_report.csv"))
    reports.plot_froc({"merged detectors": (curve, report)}, os.path.join(args.out, "froc.svg"))
    print(reports.format_cpm_text(report, title="merged detectors"))
    print(f"finished in {time.time() - start:.1f}s; reports in {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())

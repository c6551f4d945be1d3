#!/usr/bin/env python3
"""Recompute reference counts and the all-sources combination row on public data.

Point --data-dir (or NODULEKIT_CHALLENGE_DIR) at a directory containing any of:

  reader_annotations.csv   flattened multi-reader marks (see README for the schema)
  candidates_<name>.csv    one candidates CSV per detection source
  positives.csv            the reference positives to score combinations against
  scans.txt                one seriesuid per line (the evaluated scan universe)

Prints positive counts at agreement thresholds 1..4 and, when candidate files
are present, the sensitivity/candidate statistics of the all-sources merge so
they can be compared against published tables.
"""

import argparse
import os
import sys

from nodulekit import csvio
from nodulekit.combine import CandidateList, combination_sweep
from nodulekit.reference import build_reference


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--data-dir", default=os.environ.get("NODULEKIT_CHALLENGE_DIR", ""))
    args = parser.parse_args()
    if not args.data_dir or not os.path.isdir(args.data_dir):
        print("error: --data-dir (or NODULEKIT_CHALLENGE_DIR) must point at the data", file=sys.stderr)
        return 1

    reader_csv = os.path.join(args.data_dir, "reader_annotations.csv")
    if os.path.exists(reader_csv):
        rows = csvio.read_reader_annotations_csv(reader_csv)
        print(f"{len(rows)} reader marks loaded")
        for k in (1, 2, 3, 4):
            positives, irrelevant = build_reference(rows, min_agreement=k)
            print(f"  agreement >= {k}: {len(positives)} positives, {len(irrelevant)} irrelevant")
    else:
        print("reader_annotations.csv not present; skipping reference counts")

    candidate_files = sorted(
        f for f in os.listdir(args.data_dir)
        if f.startswith("candidates_") and f.endswith(".csv")
    )
    positives_csv = os.path.join(args.data_dir, "positives.csv")
    scans_txt = os.path.join(args.data_dir, "scans.txt")
    if candidate_files and os.path.exists(positives_csv) and os.path.exists(scans_txt):
        lists = [
            CandidateList(
                os.path.splitext(f)[0].removeprefix("candidates_"),
                csvio.read_candidates_csv(os.path.join(args.data_dir, f)),
            )
            for f in candidate_files
        ]
        positives = csvio.read_positives_csv(positives_csv)
        scan_ids = [s.strip() for s in open(scans_txt, encoding="utf-8") if s.strip()]
        print(f"sweeping {2 ** len(lists) - 1} combinations of {len(lists)} sources "
              f"over {len(scan_ids)} scans / {len(positives)} positives")
        sweep = combination_sweep(lists, positives, scan_ids)
        all_sources = max(sweep, key=lambda r: r.bitmask.count("1"))
        print(
            f"  all sources: sensitivity {all_sources.sensitivity:.3f} "
            f"({all_sources.detected}/{all_sources.n_nodules}), "
            f"{all_sources.total_candidates} candidates, "
            f"{all_sources.average_per_scan:.1f}/scan"
        )
    else:
        print("candidate files / positives.csv / scans.txt not all present; skipping sweep")
    return 0


if __name__ == "__main__":
    sys.exit(main())

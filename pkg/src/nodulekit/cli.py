"""Command-line interface.

Subcommands cover the full pipeline: ``phantom`` (synthesize test volumes),
``build-reference`` (merge multi-reader annotations), ``detect`` (run a
candidate detector), ``combine-candidates`` (fuse candidate lists, optional
combination sweep), ``evaluate`` (FROC/CPM scoring), ``compare`` (paired
bootstrap p-value) and ``ensemble`` (probability-averaging sweep).

Every run echoes its resolved parameters to ``<subcommand>-config.txt`` next
to its outputs, so results are reproducible from inputs plus that file.
Exit codes: 0 success, 1 usage/validation error, 2 I/O error.

The ``NODULEKIT_OUT`` environment variable overrides the default output
directory for subcommands whose ``--out`` is optional.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__, csvio, reports
from .combine import (
    DEFAULT_MASK_SLACK_MM,
    DEFAULT_MERGE_DISTANCE_MM,
    CandidateList,
    combination_sweep,
    merge_candidates,
)
from .detect import (
    ShapeIndexParams,
    detect_large,
    detect_shape_index,
    detect_subsolid,
    resample_isotropic,
)
from .ensemble import DEFAULT_ALIGN_TOLERANCE_MM, PredictionSet, ensemble_sweep
from .errors import NodulekitError
from .froc import (
    DEFAULT_BOOTSTRAP_ROUNDS,
    DEFAULT_FP_RATES,
    DEFAULT_MARK_CAP,
    compare_systems,
    evaluate_marks,
)
from .metaimage import read_metaimage, write_metaimage
from .phantom import generate_phantom, read_phantom_spec
from .reference import DEFAULT_IRRELEVANT_RADIUS_MM, DEFAULT_MIN_AGREEMENT, build_reference


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this toolkit reserves 2 for I/O.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _default_out(fallback: str) -> str:
    return os.environ.get("NODULEKIT_OUT", fallback)


def _write_config(out_dir: str, subcommand: str, params: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{subcommand}-config.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"subcommand = {subcommand}\n")
        fh.write(f"version = {__version__}\n")
        for key in sorted(params):
            value = params[key]
            if isinstance(value, (list, tuple)):
                value = " ".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")


def _parse_rates(text: str) -> tuple[float, ...]:
    try:
        rates = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise NodulekitError(f"bad --rates value {text!r}; expected comma-separated numbers")
    if not rates or any(r <= 0 for r in rates):
        raise NodulekitError("--rates must list positive FP rates")
    return rates


def _scan_ids_from(*collections) -> list[str]:
    ids = set()
    for collection in collections:
        for item in collection:
            ids.add(item.seriesuid)
    return sorted(ids)


# -- subcommand implementations ----------------------------------------------

def _cmd_phantom(args) -> int:
    spec = read_phantom_spec(args.spec)
    out = args.out or _default_out("phantom_out")
    os.makedirs(out, exist_ok=True)
    result = generate_phantom(spec)
    write_metaimage(result.volume, os.path.join(out, f"{spec.series_id}.mhd"))
    write_metaimage(result.mask, os.path.join(out, f"{spec.series_id}_mask.mhd"))
    csvio.write_annotations_csv(result.annotations, os.path.join(out, "annotations.csv"))
    _write_config(out, "phantom", {"spec": args.spec, "out": out, "series_id": spec.series_id,
                                   "seed": spec.seed})
    print(f"wrote {spec.series_id} volume, mask and {len(result.annotations)} annotation rows to {out}")
    return 0


def _cmd_build_reference(args) -> int:
    rows = csvio.read_reader_annotations_csv(args.annotations)
    positives, irrelevant = build_reference(
        rows, min_agreement=args.min_agreement, irrelevant_radius_mm=args.irrelevant_radius
    )
    out = args.out or _default_out("reference_out")
    os.makedirs(out, exist_ok=True)
    csvio.write_positives_csv(positives, os.path.join(out, "positives.csv"))
    csvio.write_irrelevant_csv(irrelevant, os.path.join(out, "irrelevant.csv"))
    _write_config(out, "build-reference", {
        "annotations": args.annotations, "min_agreement": args.min_agreement,
        "irrelevant_radius": args.irrelevant_radius, "out": out,
    })
    print(f"{len(positives)} positives, {len(irrelevant)} irrelevant findings -> {out}")
    return 0


def _detect_one(volume_path: str, args):
    seriesuid = os.path.splitext(os.path.basename(volume_path))[0]
    volume = read_metaimage(volume_path)
    mask = None
    if args.mask:
        mask_path = args.mask if len(args.volume) == 1 else os.path.join(
            args.mask, f"{seriesuid}_mask.mhd"
        )
        mask = read_metaimage(mask_path)
    if args.detector == "shape-index":
        iso = volume
        if len(set(volume.spacing)) != 1 or volume.spacing[0] != args.target_spacing:
            iso = resample_isotropic(volume, args.target_spacing)
        params = ShapeIndexParams(
            sigma_voxels=args.sigma,
            seed_si=args.seed_si,
            seed_cv_min=args.seed_cv,
            expand_si=args.expand_si,
            expand_cv_min=args.expand_cv,
            merge_radius_voxels=args.merge_radius,
        )
        return detect_shape_index(iso, params, seriesuid=seriesuid)
    if mask is None:
        raise NodulekitError(f"detector {args.detector!r} requires --mask")
    if args.detector == "subsolid":
        return detect_subsolid(
            volume, mask, seriesuid=seriesuid,
            hu_low=args.hu_low, hu_high=args.hu_high, min_volume_mm3=args.min_volume,
        )
    return detect_large(
        volume, mask, seriesuid=seriesuid,
        hu_threshold=args.hu_threshold,
        min_diameter_mm=args.min_diameter, max_diameter_mm=args.max_diameter,
    )


def _cmd_detect(args) -> int:
    workers = args.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: _detect_one(p, args), args.volume))
    candidates = [c for batch in results for c in batch]
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    csvio.write_candidates_csv(candidates, args.out)
    _write_config(out_dir, "detect", {
        "volumes": args.volume, "mask": args.mask or "", "detector": args.detector,
        "target_spacing": args.target_spacing, "sigma": args.sigma,
        "seed_si": args.seed_si, "seed_cv": args.seed_cv,
        "expand_si": args.expand_si, "expand_cv": args.expand_cv,
        "merge_radius": args.merge_radius,
        "hu_low": args.hu_low, "hu_high": args.hu_high, "min_volume": args.min_volume,
        "hu_threshold": args.hu_threshold,
        "min_diameter": args.min_diameter, "max_diameter": args.max_diameter,
        "threads": workers, "out": args.out,
    })
    print(f"{len(candidates)} candidates -> {args.out}")
    return 0


def _cmd_combine(args) -> int:
    lists = []
    for path in args.candidates:
        name = os.path.splitext(os.path.basename(path))[0]
        lists.append(CandidateList(source=name, candidates=csvio.read_candidates_csv(path)))
    masks = None
    if args.mask_dir:
        masks = {}
        for lst in lists:
            for scan in lst.by_scan():
                if scan not in masks:
                    masks[scan] = read_metaimage(os.path.join(args.mask_dir, f"{scan}_mask.mhd"))
    out = args.out or _default_out("combine_out")
    os.makedirs(out, exist_ok=True)
    merged = merge_candidates(lists, args.merge_distance, masks, args.slack)
    csvio.write_candidates_csv(merged.candidates, os.path.join(out, "merged_candidates.csv"))
    summary = f"{len(merged.candidates)} merged candidates"
    if args.reference:
        positives = csvio.read_positives_csv(args.reference)
        scan_ids = (
            [line.strip() for line in open(args.scans, encoding="utf-8") if line.strip()]
            if args.scans
            else _scan_ids_from(positives, merged.candidates)
        )
        sweep = combination_sweep(lists, positives, scan_ids, args.merge_distance, masks, args.slack)
        reports.write_combination_csv(sweep, os.path.join(out, "combination_report.csv"))
        summary += f"; sweep over {len(sweep)} combinations"
    _write_config(out, "combine-candidates", {
        "candidates": args.candidates, "merge_distance": args.merge_distance,
        "slack": args.slack, "mask_dir": args.mask_dir or "",
        "reference": args.reference or "", "scans": args.scans or "", "out": out,
    })
    print(f"{summary} -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    marks = csvio.read_predictions_csv(args.predictions)
    positives = csvio.read_positives_csv(args.reference)
    irrelevant = csvio.read_irrelevant_csv(args.irrelevant) if args.irrelevant else []
    scan_ids = (
        [line.strip() for line in open(args.scans, encoding="utf-8") if line.strip()]
        if args.scans
        else _scan_ids_from(marks, positives, irrelevant)
    )
    rates = _parse_rates(args.rates)
    out = args.out or _default_out("evaluation_out")
    os.makedirs(out, exist_ok=True)
    curve, report = evaluate_marks(
        marks, positives, irrelevant, scan_ids,
        cap=args.cap, rates=rates,
        n_boot=None if args.no_bootstrap else args.n_boot, seed=args.seed,
    )
    reports.write_froc_csv(curve, os.path.join(out, "froc_points.csv"))
    reports.write_cpm_csv(report, os.path.join(out, "cpm_report.csv"))
    text = reports.format_cpm_text(report, title=os.path.basename(args.predictions))
    with open(os.path.join(out, "cpm_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    if args.plot:
        reports.plot_froc({os.path.basename(args.predictions): (curve, report)},
                          os.path.join(out, "froc.svg"))
    _write_config(out, "evaluate", {
        "predictions": args.predictions, "reference": args.reference,
        "irrelevant": args.irrelevant or "", "scans": args.scans or "",
        "cap": args.cap, "rates": rates, "n_boot": 0 if args.no_bootstrap else args.n_boot,
        "seed": args.seed, "plot": args.plot, "out": out,
    })
    print(text, end="")
    return 0


def _cmd_compare(args) -> int:
    marks_a = csvio.read_predictions_csv(args.predictions_a)
    marks_b = csvio.read_predictions_csv(args.predictions_b)
    positives = csvio.read_positives_csv(args.reference)
    irrelevant = csvio.read_irrelevant_csv(args.irrelevant) if args.irrelevant else []
    scan_ids = _scan_ids_from(marks_a, marks_b, positives, irrelevant)
    rates = _parse_rates(args.rates)
    p = compare_systems(
        marks_a, marks_b, positives, irrelevant, scan_ids,
        n_boot=args.n_boot, seed=args.seed, rates=rates, cap=args.cap,
    )
    out = args.out or _default_out("comparison_out")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "comparison.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"system_a = {args.predictions_a}\n")
        fh.write(f"system_b = {args.predictions_b}\n")
        fh.write(f"p_value = {p:.4f}\n")
    _write_config(out, "compare", {
        "predictions_a": args.predictions_a, "predictions_b": args.predictions_b,
        "reference": args.reference, "irrelevant": args.irrelevant or "",
        "cap": args.cap, "rates": rates, "n_boot": args.n_boot, "seed": args.seed, "out": out,
    })
    print(f"p-value = {p:.4f}")
    return 0


def _cmd_ensemble(args) -> int:
    names = args.names or [os.path.splitext(os.path.basename(p))[0] for p in args.predictions]
    if len(names) != len(args.predictions):
        raise NodulekitError("--names must list one name per predictions file")
    sets = [
        PredictionSet.from_marks(name, csvio.read_predictions_csv(path))
        for name, path in zip(names, args.predictions)
    ]
    positives = csvio.read_positives_csv(args.reference)
    irrelevant = csvio.read_irrelevant_csv(args.irrelevant) if args.irrelevant else []
    all_marks = [m for s in sets for m in s.to_marks()]
    scan_ids = _scan_ids_from(all_marks, positives, irrelevant)
    rates = _parse_rates(args.rates)
    out = args.out or _default_out("ensemble_out")
    os.makedirs(out, exist_ok=True)
    sweep = ensemble_sweep(
        sets, positives, irrelevant, scan_ids,
        tolerance_mm=args.tolerance, cap=args.cap, rates=rates,
        n_boot=args.n_boot if args.pvalues else None, seed=args.seed,
    )
    reports.write_ensemble_csv(sweep, rates, os.path.join(out, "ensemble_report.csv"))
    _write_config(out, "ensemble", {
        "predictions": args.predictions, "names": names, "reference": args.reference,
        "irrelevant": args.irrelevant or "", "tolerance": args.tolerance,
        "cap": args.cap, "rates": rates, "pvalues": args.pvalues,
        "n_boot": args.n_boot, "seed": args.seed, "out": out,
    })
    best = max(sweep, key=lambda r: r.cpm)
    print(f"{len(sweep)} combinations -> {out}; best CPM {best.cpm:.3f} ({'+'.join(best.systems)})")
    return 0


# -- argument wiring ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nodulekit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"nodulekit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="generate a synthetic volume from a spec file")
    p.add_argument("--spec", required=True, help="plain-text phantom spec file")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("build-reference", help="merge multi-reader annotations")
    p.add_argument("--annotations", required=True, help="reader annotations CSV")
    p.add_argument("--min-agreement", type=int, default=DEFAULT_MIN_AGREEMENT)
    p.add_argument("--irrelevant-radius", type=float, default=DEFAULT_IRRELEVANT_RADIUS_MM,
                   help="radius (mm) for diameterless irrelevant findings")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_build_reference)

    p = sub.add_parser("detect", help="run a candidate detector on volumes")
    p.add_argument("--volume", required=True, nargs="+", help="MetaImage volume path(s)")
    p.add_argument("--mask", help="lung mask path (single volume) or directory of <id>_mask.mhd")
    p.add_argument("--detector", required=True, choices=("shape-index", "subsolid", "large"))
    p.add_argument("--target-spacing", type=float, default=1.0,
                   help="isotropic spacing (mm) for the shape-index detector")
    p.add_argument("--sigma", type=float, default=1.0, help="smoothing scale in voxels")
    p.add_argument("--seed-si", type=float, default=0.85)
    p.add_argument("--seed-cv", type=float, default=30.0)
    p.add_argument("--expand-si", type=float, default=0.75)
    p.add_argument("--expand-cv", type=float, default=15.0)
    p.add_argument("--merge-radius", type=float, default=3.0, help="cluster merge radius (voxels)")
    p.add_argument("--hu-low", type=float, default=-750.0, help="subsolid band lower bound (HU)")
    p.add_argument("--hu-high", type=float, default=-300.0, help="subsolid band upper bound (HU)")
    p.add_argument("--min-volume", type=float, default=34.0,
                   help="subsolid minimum component volume (mm^3)")
    p.add_argument("--hu-threshold", type=float, default=-300.0,
                   help="large-detector intensity threshold (HU)")
    p.add_argument("--min-diameter", type=float, default=8.0,
                   help="large-detector minimum equivalent diameter (mm)")
    p.add_argument("--max-diameter", type=float, default=40.0,
                   help="large-detector maximum equivalent diameter (mm)")
    p.add_argument("--threads", type=int, default=0, help="worker cap (0 = all cores)")
    p.add_argument("--out", required=True, help="output candidates CSV")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("combine-candidates", help="merge candidate CSVs, optional sweep")
    p.add_argument("--candidates", required=True, nargs="+", help="candidate CSV files")
    p.add_argument("--merge-distance", type=float, default=DEFAULT_MERGE_DISTANCE_MM)
    p.add_argument("--slack", type=float, default=DEFAULT_MASK_SLACK_MM)
    p.add_argument("--mask-dir", help="directory of <seriesuid>_mask.mhd lung masks")
    p.add_argument("--reference", help="positives CSV; enables the combination sweep")
    p.add_argument("--scans", help="text file with one seriesuid per line (scan universe)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_combine)

    p = sub.add_parser("evaluate", help="FROC/CPM scoring of a predictions CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--reference", required=True, help="positives CSV")
    p.add_argument("--irrelevant", help="irrelevant-findings CSV")
    p.add_argument("--scans", help="text file with one seriesuid per line (scan universe)")
    p.add_argument("--cap", type=int, default=DEFAULT_MARK_CAP)
    p.add_argument("--rates", default=",".join(str(r) for r in DEFAULT_FP_RATES))
    p.add_argument("--n-boot", type=int, default=DEFAULT_BOOTSTRAP_ROUNDS)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also write froc.svg")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="paired bootstrap p-value for two systems")
    p.add_argument("--predictions-a", required=True)
    p.add_argument("--predictions-b", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--irrelevant")
    p.add_argument("--cap", type=int, default=DEFAULT_MARK_CAP)
    p.add_argument("--rates", default=",".join(str(r) for r in DEFAULT_FP_RATES))
    p.add_argument("--n-boot", type=int, default=DEFAULT_BOOTSTRAP_ROUNDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("ensemble", help="probability-averaging sweep over systems")
    p.add_argument("--predictions", required=True, nargs="+")
    p.add_argument("--names", nargs="+", help="system names (default: file stems)")
    p.add_argument("--reference", required=True)
    p.add_argument("--irrelevant")
    p.add_argument("--tolerance", type=float, default=DEFAULT_ALIGN_TOLERANCE_MM)
    p.add_argument("--cap", type=int, default=DEFAULT_MARK_CAP)
    p.add_argument("--rates", default=",".join(str(r) for r in DEFAULT_FP_RATES))
    p.add_argument("--pvalues", action="store_true", help="paired p-values vs best single system")
    p.add_argument("--n-boot", type=int, default=DEFAULT_BOOTSTRAP_ROUNDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_ensemble)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NodulekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

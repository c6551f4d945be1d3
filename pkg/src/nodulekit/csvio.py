"""CSV wire formats.

Three mark schemas share the coordinate columns (world mm, header frame):

* annotations:  ``seriesuid,coordX,coordY,coordZ,diameter_mm``
* candidates:   ``seriesuid,coordX,coordY,coordZ`` (writer appends ``detector``)
* predictions:  ``seriesuid,coordX,coordY,coordZ,probability``

Multi-reader input adds ``reader_id`` and ``kind`` to the annotations schema;
reference outputs reuse the annotations schema (positives append
``agreement``; irrelevant findings store 2*radius in ``diameter_mm`` and
append ``source``). Extra columns are tolerated on read. Numeric output uses
six fixed decimals, so coordinates round-trip to 1e-6 mm.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

from .detect import Candidate
from .errors import FormatError
from .froc import CadMark
from .reference import IrrelevantFinding, ReaderAnnotation, ReferenceNodule
from .volume import WorldPoint

ANNOTATIONS_HEADER = ("seriesuid", "coordX", "coordY", "coordZ", "diameter_mm")
CANDIDATES_HEADER = ("seriesuid", "coordX", "coordY", "coordZ")
PREDICTIONS_HEADER = ("seriesuid", "coordX", "coordY", "coordZ", "probability")
READER_ANNOTATIONS_HEADER = ANNOTATIONS_HEADER + ("reader_id", "kind")

_FLOAT_FORMAT = "{:.6f}"


@dataclass(frozen=True)
class AnnotationRow:
    seriesuid: str
    center: WorldPoint
    diameter_mm: float

    @property
    def radius_mm(self) -> float:
        return self.diameter_mm / 2.0


def _fmt(value: float) -> str:
    return _FLOAT_FORMAT.format(value)


def _open_rows(path, required: tuple[str, ...]):
    path = os.fspath(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty file, expected a header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise FormatError(f"{path}: missing required columns {missing}")
        yield from ((path, lineno, row) for lineno, row in enumerate(reader, start=2))


def _parse_float(path: str, lineno: int, column: str, raw: str) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}:{lineno}: non-numeric {column}: {raw!r}") from exc
    if not math.isfinite(value):
        raise FormatError(f"{path}:{lineno}: non-finite {column}: {raw!r}")
    return value


def _parse_center(path, lineno, row) -> WorldPoint:
    return (
        _parse_float(path, lineno, "coordX", row["coordX"]),
        _parse_float(path, lineno, "coordY", row["coordY"]),
        _parse_float(path, lineno, "coordZ", row["coordZ"]),
    )


def read_annotations_csv(path) -> list[AnnotationRow]:
    rows = []
    for p, lineno, row in _open_rows(path, ANNOTATIONS_HEADER):
        diameter = _parse_float(p, lineno, "diameter_mm", row["diameter_mm"])
        if diameter <= 0:
            raise FormatError(f"{p}:{lineno}: diameter_mm must be positive, got {diameter}")
        rows.append(AnnotationRow(row["seriesuid"], _parse_center(p, lineno, row), diameter))
    return rows


def read_candidates_csv(path) -> list[Candidate]:
    return [
        Candidate(
            seriesuid=row["seriesuid"],
            center=_parse_center(p, lineno, row),
            detector=row.get("detector", "unknown") or "unknown",
        )
        for p, lineno, row in _open_rows(path, CANDIDATES_HEADER)
    ]


def read_predictions_csv(path) -> list[CadMark]:
    marks = []
    for p, lineno, row in _open_rows(path, PREDICTIONS_HEADER):
        probability = _parse_float(p, lineno, "probability", row["probability"])
        if not 0.0 <= probability <= 1.0:
            raise FormatError(
                f"{p}:{lineno}: probability must be in [0, 1], got {probability}"
            )
        marks.append(CadMark(row["seriesuid"], _parse_center(p, lineno, row), probability))
    return marks


def read_marks_csv(path, kind: str):
    """Dispatch on schema kind: 'annotations', 'candidates' or 'predictions'."""
    readers = {
        "annotations": read_annotations_csv,
        "candidates": read_candidates_csv,
        "predictions": read_predictions_csv,
    }
    if kind not in readers:
        raise FormatError(f"unknown CSV kind {kind!r}; expected one of {sorted(readers)}")
    return readers[kind](path)


def read_reader_annotations_csv(path) -> list[ReaderAnnotation]:
    """Multi-reader marks; ``diameter_mm`` may be blank for non-nodule kinds."""
    rows = []
    for p, lineno, row in _open_rows(path, READER_ANNOTATIONS_HEADER):
        raw_diameter = (row["diameter_mm"] or "").strip()
        diameter = _parse_float(p, lineno, "diameter_mm", raw_diameter) if raw_diameter else None
        try:
            reader_id = int(row["reader_id"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{p}:{lineno}: non-integer reader_id: {row['reader_id']!r}") from exc
        try:
            rows.append(
                ReaderAnnotation(
                    seriesuid=row["seriesuid"],
                    reader_id=reader_id,
                    kind=(row["kind"] or "").strip(),
                    center=_parse_center(p, lineno, row),
                    diameter_mm=diameter,
                )
            )
        except ValueError as exc:
            raise FormatError(f"{p}:{lineno}: {exc}") from exc
    return rows


# -- writers ----------------------------------------------------------------

def _write_csv(path, header, rows) -> None:
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_annotations_csv(rows: list[AnnotationRow], path) -> None:
    _write_csv(
        path,
        ANNOTATIONS_HEADER,
        (
            (r.seriesuid, _fmt(r.center[0]), _fmt(r.center[1]), _fmt(r.center[2]),
             _fmt(r.diameter_mm))
            for r in rows
        ),
    )


def write_candidates_csv(candidates: list[Candidate], path) -> None:
    _write_csv(
        path,
        CANDIDATES_HEADER + ("detector",),
        (
            (c.seriesuid, _fmt(c.center[0]), _fmt(c.center[1]), _fmt(c.center[2]), c.detector)
            for c in candidates
        ),
    )


def write_predictions_csv(marks: list[CadMark], path) -> None:
    _write_csv(
        path,
        PREDICTIONS_HEADER,
        (
            (m.seriesuid, _fmt(m.center[0]), _fmt(m.center[1]), _fmt(m.center[2]), _fmt(m.score))
            for m in marks
        ),
    )


def write_reader_annotations_csv(rows: list[ReaderAnnotation], path) -> None:
    _write_csv(
        path,
        READER_ANNOTATIONS_HEADER,
        (
            (
                r.seriesuid,
                _fmt(r.center[0]), _fmt(r.center[1]), _fmt(r.center[2]),
                _fmt(r.diameter_mm) if r.diameter_mm is not None else "",
                r.reader_id,
                r.kind,
            )
            for r in rows
        ),
    )


def write_positives_csv(nodules: list[ReferenceNodule], path) -> None:
    _write_csv(
        path,
        ANNOTATIONS_HEADER + ("agreement",),
        (
            (n.seriesuid, _fmt(n.center[0]), _fmt(n.center[1]), _fmt(n.center[2]),
             _fmt(n.diameter_mm), n.agreement)
            for n in nodules
        ),
    )


def write_irrelevant_csv(findings: list[IrrelevantFinding], path) -> None:
    _write_csv(
        path,
        ANNOTATIONS_HEADER + ("source",),
        (
            (f.seriesuid, _fmt(f.center[0]), _fmt(f.center[1]), _fmt(f.center[2]),
             _fmt(2.0 * f.radius_mm), f.source_kind)
            for f in findings
        ),
    )


def read_positives_csv(path) -> list[ReferenceNodule]:
    """Reference positives; the ``agreement`` column defaults to 1 when absent."""
    nodules = []
    for p, lineno, row in _open_rows(path, ANNOTATIONS_HEADER):
        diameter = _parse_float(p, lineno, "diameter_mm", row["diameter_mm"])
        if diameter <= 0:
            raise FormatError(f"{p}:{lineno}: diameter_mm must be positive, got {diameter}")
        agreement = int(row["agreement"]) if row.get("agreement") else 1
        nodules.append(
            ReferenceNodule(
                seriesuid=row["seriesuid"],
                center=_parse_center(p, lineno, row),
                diameter_mm=diameter,
                agreement=agreement,
                member_ids=(),
            )
        )
    return nodules


def read_irrelevant_csv(path) -> list[IrrelevantFinding]:
    findings = []
    for p, lineno, row in _open_rows(path, ANNOTATIONS_HEADER):
        diameter = _parse_float(p, lineno, "diameter_mm", row["diameter_mm"])
        if diameter <= 0:
            raise FormatError(f"{p}:{lineno}: diameter_mm must be positive, got {diameter}")
        findings.append(
            IrrelevantFinding(
                seriesuid=row["seriesuid"],
                center=_parse_center(p, lineno, row),
                radius_mm=diameter / 2.0,
                source_kind=row.get("source", "unknown") or "unknown",
            )
        )
    return findings

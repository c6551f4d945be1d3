"""Combining classifier outputs on a shared candidate list.

Systems scoring the same candidates are combined by plain probability
averaging. Before averaging, candidates are aligned across systems by scan
id and position: with a zero tolerance this is exact-key matching; a small
tolerance absorbs floating-point drift between exports. Matching is
nearest-neighbour and injective, and any ambiguity (two candidates of one
system inside the tolerance ball of a single candidate of another) is an
error rather than a guess.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .froc import (
    DEFAULT_FP_RATES,
    DEFAULT_MARK_CAP,
    CadMark,
    compare_systems,
    evaluate_marks,
)
from .volume import WorldPoint

DEFAULT_ALIGN_TOLERANCE_MM = 0.01


@dataclass
class PredictionSet:
    """Per-candidate probabilities from one system."""

    name: str
    probabilities: dict[tuple[str, WorldPoint], float]

    @classmethod
    def from_marks(cls, name: str, marks: list[CadMark]) -> "PredictionSet":
        probs: dict[tuple[str, WorldPoint], float] = {}
        for mark in marks:
            if not 0.0 <= mark.score <= 1.0:
                raise ValidationError(
                    f"prediction probability must be in [0, 1], got {mark.score}"
                )
            key = (mark.seriesuid, mark.center)
            if key in probs:
                raise ValidationError(f"duplicate candidate {key} in system {name!r}")
            probs[key] = mark.score
        return cls(name=name, probabilities=probs)

    def to_marks(self) -> list[CadMark]:
        return [
            CadMark(seriesuid=scan, center=center, score=p)
            for (scan, center), p in self.probabilities.items()
        ]


@dataclass
class AlignedCandidate:
    seriesuid: str
    center: WorldPoint
    probabilities: tuple[float | None, ...]  # one slot per system, None = missing


@dataclass
class AlignedTable:
    system_names: tuple[str, ...]
    entries: list[AlignedCandidate]
    unmatched: list[tuple[str, str, WorldPoint]]  # (system, scan, position)


def align_candidates(
    sets: list[PredictionSet], tolerance_mm: float = DEFAULT_ALIGN_TOLERANCE_MM
) -> AlignedTable:
    """Match candidates across systems; the first system anchors the table."""
    if not sets:
        raise ValidationError("need at least one prediction set")
    if tolerance_mm < 0:
        raise ValidationError(f"tolerance must be non-negative, got {tolerance_mm}")

    anchor = sets[0]
    anchor_keys = list(anchor.probabilities)
    probs: list[list[float | None]] = [
        [anchor.probabilities[k]] + [None] * (len(sets) - 1) for k in anchor_keys
    ]
    anchor_by_scan: dict[str, list[int]] = {}
    for i, (scan, _) in enumerate(anchor_keys):
        anchor_by_scan.setdefault(scan, []).append(i)

    unmatched: list[tuple[str, str, WorldPoint]] = []
    for s, other in enumerate(sets[1:], start=1):
        matched_anchors: dict[int, tuple[str, WorldPoint]] = {}
        for scan, rows in _group_keys_by_scan(other).items():
            anchors = anchor_by_scan.get(scan, [])
            if not anchors:
                unmatched.extend((other.name, scan, center) for center in rows)
                continue
            tree = cKDTree(np.array([anchor_keys[i][1] for i in anchors]))
            hits = tree.query_ball_point(np.array(rows), r=tolerance_mm)
            for center, near in zip(rows, hits):
                if len(near) > 1:
                    raise ValidationError(
                        f"ambiguous alignment: candidate {center} of {other.name!r} on "
                        f"{scan} matches {len(near)} candidates of {anchor.name!r}"
                    )
                if not near:
                    unmatched.append((other.name, scan, center))
                    continue
                target = anchors[near[0]]
                if target in matched_anchors:
                    raise ValidationError(
                        f"ambiguous alignment: candidates {matched_anchors[target][1]} and "
                        f"{center} of {other.name!r} both match one candidate of "
                        f"{anchor.name!r} on {scan}"
                    )
                matched_anchors[target] = (scan, center)
                probs[target][s] = other.probabilities[(scan, center)]
        # anchor candidates this system failed to cover
        for i, key in enumerate(anchor_keys):
            if probs[i][s] is None:
                unmatched.append((other.name, key[0], key[1]))

    entries = [
        AlignedCandidate(seriesuid=key[0], center=key[1], probabilities=tuple(p))
        for key, p in zip(anchor_keys, probs)
    ]
    return AlignedTable(
        system_names=tuple(s.name for s in sets), entries=entries, unmatched=unmatched
    )


def _group_keys_by_scan(prediction_set: PredictionSet) -> dict[str, list[WorldPoint]]:
    grouped: dict[str, list[WorldPoint]] = {}
    for scan, center in prediction_set.probabilities:
        grouped.setdefault(scan, []).append(center)
    return grouped


def average_predictions(table: AlignedTable, subset: tuple[int, ...]) -> PredictionSet:
    """Arithmetic mean of the subset systems' probabilities, per candidate."""
    if not subset:
        raise ValidationError("subset must be nonempty")
    incomplete = sum(
        1 for e in table.entries if any(e.probabilities[i] is None for i in subset)
    )
    if incomplete:
        names = [table.system_names[i] for i in subset]
        raise ValidationError(
            f"{incomplete} candidates are not aligned across all of {names}; "
            "combine only fully aligned systems"
        )
    name = "+".join(table.system_names[i] for i in subset)
    # canonical summation order makes the mean bit-for-bit permutation invariant
    members = sorted(subset)
    return PredictionSet(
        name=name,
        probabilities={
            (e.seriesuid, e.center): float(np.mean([e.probabilities[i] for i in members]))
            for e in table.entries
        },
    )


@dataclass
class EnsembleReport:
    """One row of the ensemble sweep."""

    systems: tuple[str, ...]
    bitmask: str
    sensitivities: np.ndarray
    cpm: float
    best_single_cpm: float | None = None
    cpm_difference: float | None = None
    p_value: float | None = None


def ensemble_sweep(
    sets: list[PredictionSet],
    positives,
    irrelevant,
    scan_ids: list[str],
    tolerance_mm: float = DEFAULT_ALIGN_TOLERANCE_MM,
    cap: int = DEFAULT_MARK_CAP,
    rates: tuple[float, ...] = DEFAULT_FP_RATES,
    n_boot: int | None = None,
    seed: int = 0,
) -> list[EnsembleReport]:
    """Score every nonempty subset of systems after probability averaging.

    With ``n_boot`` set, each subset also gets a paired-bootstrap p-value
    against the best single system (whose own row reports no p-value).
    """
    if len(sets) > 10:
        raise ValidationError(f"sweep supports at most 10 systems, got {len(sets)}")
    table = align_candidates(sets, tolerance_mm)
    n = len(sets)

    subset_marks: dict[tuple[int, ...], list[CadMark]] = {}
    subset_cpm: dict[tuple[int, ...], tuple[np.ndarray, float]] = {}
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            marks = average_predictions(table, subset).to_marks()
            _, report = evaluate_marks(marks, positives, irrelevant, scan_ids, cap=cap, rates=rates)
            subset_marks[subset] = marks
            subset_cpm[subset] = (report.sensitivities, report.cpm)

    best_idx = max(range(n), key=lambda i: subset_cpm[(i,)][1])
    reference_marks = subset_marks[(best_idx,)]

    reports = []
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            sens, score = subset_cpm[subset]
            if size == 1:
                best, diff = None, None
            else:
                best = max(subset_cpm[(i,)][1] for i in subset)
                diff = score - best
            p_value = None
            if n_boot and subset != (best_idx,):
                p_value = compare_systems(
                    subset_marks[subset], reference_marks, positives, irrelevant,
                    scan_ids, n_boot=n_boot, seed=seed, rates=rates, cap=cap,
                )
            reports.append(
                EnsembleReport(
                    systems=tuple(sets[i].name for i in subset),
                    bitmask="".join("1" if i in subset else "0" for i in range(n)),
                    sensitivities=sens,
                    cpm=score,
                    best_single_cpm=best,
                    cpm_difference=diff,
                    p_value=p_value,
                )
            )
    return reports

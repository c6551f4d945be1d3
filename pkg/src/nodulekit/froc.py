"""FROC scoring: hit assignment, curve, CPM, bootstrap bands, paired comparison.

Scoring protocol
----------------
A CAD mark hits a reference nodule when its Euclidean world distance to the
nodule center is at most the nodule radius. A nodule detected by several
marks keeps only the highest-scoring one; the outranked marks are *ignored*
(they found an already-detected lesion, not a false structure). Marks inside
an irrelevant finding's radius are ignored as well. Every remaining mark is
a false positive. Before any of this, marks are capped per scan to the
``limit`` highest scores.

The FROC curve sweeps a threshold over all distinct mark scores; each
threshold yields one operating point (false positives per scan, sensitivity).
The summary score averages the sensitivity read off the curve at seven
false-positive rates (1/8 .. 8 per scan), interpolating linearly between
operating points and extending the end points as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .volume import WorldPoint, as_point

DEFAULT_FP_RATES = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_MARK_CAP = 100
DEFAULT_BOOTSTRAP_ROUNDS = 1000

LABEL_TP = "tp"
LABEL_FP = "fp"
LABEL_IGNORED = "ignored"


@dataclass(frozen=True)
class CadMark:
    """A system-output location with a suspicion score (higher = more suspicious)."""

    seriesuid: str
    center: WorldPoint
    score: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not np.isfinite(self.score):
            raise ValidationError(f"mark score must be finite, got {self.score}")


@dataclass
class ScanOutcome:
    seriesuid: str
    n_nodules: int
    tp_scores: np.ndarray
    fp_scores: np.ndarray
    n_ignored: int


@dataclass
class HitAssignment:
    """Labelled marks and per-nodule matches for one evaluation run.

    ``mark_labels[i]`` labels ``marks[i]`` as tp/fp/ignored; ``nodule_match[j]``
    is the index of the mark matched to nodule j (or None). ``outcomes``
    groups scores per scan for resampling.
    """

    marks: list[CadMark]
    mark_labels: list[str]
    nodule_match: list[int | None]
    outcomes: dict[str, ScanOutcome] = field(default_factory=dict)

    @property
    def n_nodules(self) -> int:
        return len(self.nodule_match)


@dataclass
class FrocCurve:
    """Operating points ordered by ascending false positives per scan."""

    thresholds: np.ndarray  # descending
    fps_per_scan: np.ndarray  # ascending
    sensitivity: np.ndarray  # ascending
    n_scans: int
    n_nodules: int


@dataclass
class CpmReport:
    """Sensitivities at fixed FP rates, their mean, and optional bootstrap bands."""

    rates: tuple[float, ...]
    sensitivities: np.ndarray
    cpm: float
    n_scans: int
    n_nodules: int
    rate_bands: np.ndarray | None = None  # shape (len(rates), 2), 95% interval
    cpm_band: tuple[float, float] | None = None
    p_value: float | None = None


def cap_marks(marks: list[CadMark], limit: int = DEFAULT_MARK_CAP) -> list[CadMark]:
    """Keep the top ``limit`` marks per scan by score; ties keep earlier input rows."""
    if limit < 1:
        raise ValidationError(f"cap limit must be >= 1, got {limit}")
    by_scan: dict[str, list[tuple[int, CadMark]]] = {}
    for idx, mark in enumerate(marks):
        by_scan.setdefault(mark.seriesuid, []).append((idx, mark))
    keep: set[int] = set()
    for entries in by_scan.values():
        ranked = sorted(entries, key=lambda e: (-e[1].score, e[0]))
        keep.update(idx for idx, _ in ranked[:limit])
    return [mark for idx, mark in enumerate(marks) if idx in keep]


def assign_hits(marks: list[CadMark], positives, irrelevant) -> HitAssignment:
    """Label every mark tp / fp / ignored and match nodules to their best mark.

    A mark inside several nodules' radii is attributed to the nodule with the
    smallest distance-to-radius ratio, so small lesions are not starved by
    neighbouring large ones.
    """
    nodules_by_scan: dict[str, list[int]] = {}
    for j, nodule in enumerate(positives):
        nodules_by_scan.setdefault(nodule.seriesuid, []).append(j)
    irrelevant_by_scan: dict[str, list] = {}
    for finding in irrelevant:
        irrelevant_by_scan.setdefault(finding.seriesuid, []).append(finding)
    marks_by_scan: dict[str, list[int]] = {}
    for i, mark in enumerate(marks):
        marks_by_scan.setdefault(mark.seriesuid, []).append(i)

    labels = [LABEL_FP] * len(marks)
    nodule_match: list[int | None] = [None] * len(positives)
    outcomes: dict[str, ScanOutcome] = {}

    scan_ids = sorted(set(nodules_by_scan) | set(marks_by_scan) | set(irrelevant_by_scan))
    for seriesuid in scan_ids:
        mark_idx = marks_by_scan.get(seriesuid, [])
        nodule_idx = nodules_by_scan.get(seriesuid, [])
        findings = irrelevant_by_scan.get(seriesuid, [])

        assigned_nodule = np.full(len(mark_idx), -1)
        if mark_idx and nodule_idx:
            mark_pos = np.array([marks[i].center for i in mark_idx])
            nod_pos = np.array([positives[j].center for j in nodule_idx])
            nod_rad = np.array([positives[j].radius_mm for j in nodule_idx])
            dist = np.linalg.norm(mark_pos[:, None, :] - nod_pos[None, :, :], axis=2)
            ratio = dist / nod_rad[None, :]
            inside = dist <= nod_rad[None, :]
            ratio[~inside] = np.inf
            hit_any = inside.any(axis=1)
            assigned_nodule[hit_any] = np.argmin(ratio[hit_any], axis=1)

        tp_scores = []
        for local_j in range(len(nodule_idx)):
            contenders = [m for m, a in enumerate(assigned_nodule) if a == local_j]
            if not contenders:
                continue
            best = max(contenders, key=lambda m: (marks[mark_idx[m]].score, -m))
            labels[mark_idx[best]] = LABEL_TP
            nodule_match[nodule_idx[local_j]] = mark_idx[best]
            tp_scores.append(marks[mark_idx[best]].score)
            for m in contenders:
                if m != best:
                    labels[mark_idx[m]] = LABEL_IGNORED

        fp_scores = []
        n_ignored = sum(
            1 for m in range(len(mark_idx)) if labels[mark_idx[m]] == LABEL_IGNORED
        )
        for m in range(len(mark_idx)):
            if assigned_nodule[m] >= 0:
                continue
            mark = marks[mark_idx[m]]
            pos = np.array(mark.center)
            in_finding = any(
                np.linalg.norm(pos - np.array(f.center)) <= f.radius_mm for f in findings
            )
            if in_finding:
                labels[mark_idx[m]] = LABEL_IGNORED
                n_ignored += 1
            else:
                fp_scores.append(mark.score)

        outcomes[seriesuid] = ScanOutcome(
            seriesuid=seriesuid,
            n_nodules=len(nodule_idx),
            tp_scores=np.array(tp_scores, dtype=np.float64),
            fp_scores=np.array(fp_scores, dtype=np.float64),
            n_ignored=n_ignored,
        )

    return HitAssignment(
        marks=list(marks), mark_labels=labels, nodule_match=nodule_match, outcomes=outcomes
    )


def _curve_from_scores(
    tp_scores: np.ndarray, fp_scores: np.ndarray, n_nodules: int, n_scans: int
) -> FrocCurve:
    if n_nodules <= 0:
        raise ValidationError("FROC sensitivity is undefined with zero reference nodules")
    if n_scans < 1:
        raise ValidationError(f"scan count must be >= 1, got {n_scans}")
    scores = np.concatenate([tp_scores, fp_scores])
    if scores.size == 0:
        return FrocCurve(
            thresholds=np.array([np.inf]),
            fps_per_scan=np.array([0.0]),
            sensitivity=np.array([0.0]),
            n_scans=n_scans,
            n_nodules=n_nodules,
        )
    thresholds = np.unique(scores)[::-1]
    tp_sorted = np.sort(tp_scores)
    fp_sorted = np.sort(fp_scores)
    # counts with score >= threshold
    n_tp = len(tp_sorted) - np.searchsorted(tp_sorted, thresholds, side="left")
    n_fp = len(fp_sorted) - np.searchsorted(fp_sorted, thresholds, side="left")
    return FrocCurve(
        thresholds=thresholds,
        fps_per_scan=n_fp / n_scans,
        sensitivity=n_tp / n_nodules,
        n_scans=n_scans,
        n_nodules=n_nodules,
    )


def froc(assignment: HitAssignment, n_scans: int) -> FrocCurve:
    """FROC curve over all distinct mark scores."""
    tp = np.concatenate([o.tp_scores for o in assignment.outcomes.values()] or [np.array([])])
    fp = np.concatenate([o.fp_scores for o in assignment.outcomes.values()] or [np.array([])])
    n_nodules = sum(o.n_nodules for o in assignment.outcomes.values())
    return _curve_from_scores(tp, fp, n_nodules, n_scans)


def sensitivity_at(curve: FrocCurve, rates) -> np.ndarray:
    """Sensitivity at the given FP rates, linearly interpolated along the curve.

    Several operating points can share one FP rate (thresholds that add TPs
    without FPs); the achievable sensitivity there is the largest one. Rates
    outside the achieved range take the nearest end point's sensitivity.
    """
    fps = curve.fps_per_scan
    sens = curve.sensitivity
    keep = np.r_[fps[1:] != fps[:-1], True]
    return np.interp(np.asarray(rates, dtype=np.float64), fps[keep], sens[keep])


def cpm(curve: FrocCurve, rates: tuple[float, ...] = DEFAULT_FP_RATES) -> CpmReport:
    """Competition performance metric: mean sensitivity at the target FP rates."""
    sens = sensitivity_at(curve, rates)
    return CpmReport(
        rates=tuple(rates),
        sensitivities=sens,
        cpm=float(sens.mean()),
        n_scans=curve.n_scans,
        n_nodules=curve.n_nodules,
    )


def _collect_outcomes(assignment: HitAssignment, scan_ids: list[str]) -> list[ScanOutcome]:
    empty = np.array([], dtype=np.float64)
    known = set(assignment.outcomes)
    extra = known - set(scan_ids)
    if extra:
        raise ValidationError(
            f"marks or reference entries reference scans outside the evaluated set: {sorted(extra)}"
        )
    return [
        assignment.outcomes.get(s, ScanOutcome(s, 0, empty, empty, 0)) for s in scan_ids
    ]


def _replicate_sensitivities(
    outcomes: list[ScanOutcome], index_matrix: np.ndarray, rates
) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate sensitivities at ``rates`` and CPMs for a resampling matrix.

    Replicates that draw zero nodules have undefined sensitivity and are
    scored as all-zero; with a non-degenerate scan set this does not occur.
    """
    n_boot = index_matrix.shape[0]
    sens = np.zeros((n_boot, len(rates)), dtype=np.float64)
    for b in range(n_boot):
        chosen = [outcomes[i] for i in index_matrix[b]]
        n_nodules = sum(o.n_nodules for o in chosen)
        if n_nodules == 0:
            continue
        tp = np.concatenate([o.tp_scores for o in chosen])
        fp = np.concatenate([o.fp_scores for o in chosen])
        curve = _curve_from_scores(tp, fp, n_nodules, len(chosen))
        sens[b] = sensitivity_at(curve, rates)
    return sens, sens.mean(axis=1)


def bootstrap_band(
    marks: list[CadMark],
    positives,
    irrelevant,
    scan_ids: list[str],
    n_boot: int = DEFAULT_BOOTSTRAP_ROUNDS,
    seed: int = 0,
    rates: tuple[float, ...] = DEFAULT_FP_RATES,
    cap: int = DEFAULT_MARK_CAP,
) -> tuple[np.ndarray, tuple[float, float]]:
    """95% bootstrap intervals, resampling scans with replacement.

    Returns (per-rate bands of shape (len(rates), 2), CPM band). Deterministic
    for a fixed seed.
    """
    if n_boot < 1:
        raise ValidationError(f"n_boot must be >= 1, got {n_boot}")
    assignment = assign_hits(cap_marks(marks, cap), positives, irrelevant)
    outcomes = _collect_outcomes(assignment, scan_ids)
    rng = np.random.default_rng(seed)
    index_matrix = rng.integers(0, len(scan_ids), size=(n_boot, len(scan_ids)))
    sens, cpms = _replicate_sensitivities(outcomes, index_matrix, rates)
    rate_bands = np.percentile(sens, [2.5, 97.5], axis=0).T
    cpm_band = tuple(np.percentile(cpms, [2.5, 97.5]))
    return rate_bands, cpm_band


def compare_systems(
    marks_a: list[CadMark],
    marks_b: list[CadMark],
    positives,
    irrelevant,
    scan_ids: list[str],
    n_boot: int = DEFAULT_BOOTSTRAP_ROUNDS,
    seed: int = 0,
    rates: tuple[float, ...] = DEFAULT_FP_RATES,
    cap: int = DEFAULT_MARK_CAP,
) -> float:
    """Two-sided paired-bootstrap p-value for the CPM difference of two systems.

    Each replicate resamples the scan set once and evaluates both systems on
    it. p = 2 * min(frac(CPM_A >= CPM_B), frac(CPM_A <= CPM_B)), clamped to
    [1/n_boot, 1].
    """
    if n_boot < 1:
        raise ValidationError(f"n_boot must be >= 1, got {n_boot}")
    out_a = _collect_outcomes(assign_hits(cap_marks(marks_a, cap), positives, irrelevant), scan_ids)
    out_b = _collect_outcomes(assign_hits(cap_marks(marks_b, cap), positives, irrelevant), scan_ids)
    rng = np.random.default_rng(seed)
    index_matrix = rng.integers(0, len(scan_ids), size=(n_boot, len(scan_ids)))
    _, cpms_a = _replicate_sensitivities(out_a, index_matrix, rates)
    _, cpms_b = _replicate_sensitivities(out_b, index_matrix, rates)
    frac_ge = float(np.mean(cpms_a >= cpms_b))
    frac_le = float(np.mean(cpms_a <= cpms_b))
    return float(np.clip(2.0 * min(frac_ge, frac_le), 1.0 / n_boot, 1.0))


def evaluate_marks(
    marks: list[CadMark],
    positives,
    irrelevant,
    scan_ids: list[str],
    cap: int = DEFAULT_MARK_CAP,
    rates: tuple[float, ...] = DEFAULT_FP_RATES,
    n_boot: int | None = None,
    seed: int = 0,
) -> tuple[FrocCurve, CpmReport]:
    """Cap, assign, score; optionally attach bootstrap bands to the report."""
    capped = cap_marks(marks, cap)
    assignment = assign_hits(capped, positives, irrelevant)
    _collect_outcomes(assignment, scan_ids)
    curve = froc(assignment, len(scan_ids))
    report = cpm(curve, rates)
    if n_boot:
        rate_bands, cpm_band = bootstrap_band(
            marks, positives, irrelevant, scan_ids, n_boot=n_boot, seed=seed, rates=rates, cap=cap
        )
        report.rate_bands = rate_bands
        report.cpm_band = cpm_band
    return curve, report

"""Merging candidate lists and sweeping detector combinations.

Candidates from complementary detectors are concatenated per scan and fused
by transitive closure of "closer than the merge distance" on the original
positions; each cluster reports its centroid. With a lung mask, merged
candidates farther than the slack distance from the mask are discarded
(Euclidean distance via a distance transform, so the semantics do not depend
on voxel spacing).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

from .clustering import cluster_within
from .detect import Candidate
from .errors import ValidationError
from .reference import ReferenceNodule
from .volume import Volume, as_point

DEFAULT_MERGE_DISTANCE_MM = 5.0
DEFAULT_MASK_SLACK_MM = 10.0


@dataclass
class CandidateList:
    """A named candidate source."""

    source: str
    candidates: list[Candidate]

    def by_scan(self) -> dict[str, list[Candidate]]:
        grouped: dict[str, list[Candidate]] = {}
        for c in self.candidates:
            grouped.setdefault(c.seriesuid, []).append(c)
        return grouped


@dataclass
class CombinationReport:
    """One row of the combination sweep."""

    sources: tuple[str, ...]
    bitmask: str
    sensitivity: float
    detected: int
    n_nodules: int
    total_candidates: int
    n_scans: int
    average_per_scan: float
    best_single_sensitivity: float | None = None
    sensitivity_difference: float | None = None


def _distance_to_mask(mask: Volume) -> np.ndarray:
    """Per-voxel Euclidean distance (mm) to the nearest in-mask voxel."""
    inside = mask.data > 0
    sx, sy, sz = mask.spacing
    return ndimage.distance_transform_edt(~inside, sampling=(sz, sy, sx))


def _outside_slack(candidate: Candidate, mask: Volume, edt: np.ndarray, slack: float) -> bool:
    voxel = mask.world_to_voxel(candidate.center)  # (x, y, z), continuous
    nx, ny, nz = mask.dims
    clamped = np.clip(np.rint(voxel), 0, [nx - 1, ny - 1, nz - 1]).astype(int)
    snap_penalty = float(
        np.linalg.norm(np.array(candidate.center) - mask.voxel_to_world(clamped))
    )
    i, j, k = clamped
    return edt[k, j, i] + snap_penalty > slack


def merge_candidates(
    lists: list[CandidateList],
    merge_distance_mm: float = DEFAULT_MERGE_DISTANCE_MM,
    masks: dict[str, Volume] | None = None,
    slack_mm: float = DEFAULT_MASK_SLACK_MM,
) -> CandidateList:
    """Fuse candidate lists; see the module docstring for the exact rules."""
    if merge_distance_mm <= 0:
        raise ValidationError(f"merge distance must be positive, got {merge_distance_mm}")
    if slack_mm < 0:
        raise ValidationError(f"slack must be non-negative, got {slack_mm}")

    source = "+".join(lst.source for lst in lists)
    pooled: dict[str, list[Candidate]] = {}
    for lst in lists:
        for scan, cands in lst.by_scan().items():
            pooled.setdefault(scan, []).extend(cands)

    edt_cache: dict[str, np.ndarray] = {}
    merged: list[Candidate] = []
    for scan in sorted(pooled):
        cands = pooled[scan]
        points = np.array([c.center for c in cands], dtype=np.float64)
        labels = cluster_within(points, merge_distance_mm)
        scan_merged = []
        for label in range(labels.max() + 1):
            members = points[labels == label]
            scan_merged.append(
                Candidate(
                    seriesuid=scan,
                    center=as_point(members.mean(axis=0)),
                    detector=source,
                    cluster_size=int(len(members)),
                )
            )
        if masks is not None and scan in masks:
            mask = masks[scan]
            if scan not in edt_cache:
                edt_cache[scan] = _distance_to_mask(mask)
            scan_merged = [
                c for c in scan_merged
                if not _outside_slack(c, mask, edt_cache[scan], slack_mm)
            ]
        merged.extend(scan_merged)
    return CandidateList(source=source, candidates=merged)


def count_detected(candidates: list[Candidate], positives: list[ReferenceNodule]) -> int:
    """Number of reference nodules with at least one candidate within their radius."""
    by_scan: dict[str, list[np.ndarray]] = {}
    for c in candidates:
        by_scan.setdefault(c.seriesuid, []).append(np.array(c.center))
    detected = 0
    for nodule in positives:
        points = by_scan.get(nodule.seriesuid)
        if not points:
            continue
        dist = np.linalg.norm(np.stack(points) - np.array(nodule.center), axis=1)
        if (dist <= nodule.radius_mm).any():
            detected += 1
    return detected


def combination_sweep(
    lists: list[CandidateList],
    positives: list[ReferenceNodule],
    scan_ids: list[str],
    merge_distance_mm: float = DEFAULT_MERGE_DISTANCE_MM,
    masks: dict[str, Volume] | None = None,
    slack_mm: float = DEFAULT_MASK_SLACK_MM,
) -> list[CombinationReport]:
    """Evaluate every nonempty subset of the candidate sources.

    Each subset is merged from scratch (merging is not associative) and
    scored by the same hit rule as the FROC evaluation: a nodule counts as
    detected when some merged candidate lies within its radius.
    """
    if len(lists) > 10:
        raise ValidationError(f"sweep supports at most 10 sources, got {len(lists)}")
    if not positives:
        raise ValidationError("sweep needs at least one reference nodule")
    if not scan_ids:
        raise ValidationError("sweep needs at least one scan id")

    n = len(lists)
    n_nodules = len(positives)
    reports: list[CombinationReport] = []
    single_sensitivity: dict[int, float] = {}

    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            merged = merge_candidates(
                [lists[i] for i in subset], merge_distance_mm, masks, slack_mm
            )
            detected = count_detected(merged.candidates, positives)
            sensitivity = detected / n_nodules
            if size == 1:
                single_sensitivity[subset[0]] = sensitivity
                best = None
                diff = None
            else:
                best = max(single_sensitivity[i] for i in subset)
                diff = sensitivity - best
            total = len(merged.candidates)
            reports.append(
                CombinationReport(
                    sources=tuple(lists[i].source for i in subset),
                    bitmask="".join("1" if i in subset else "0" for i in range(n)),
                    sensitivity=sensitivity,
                    detected=detected,
                    n_nodules=n_nodules,
                    total_candidates=total,
                    n_scans=len(scan_ids),
                    average_per_scan=total / len(scan_ids),
                    best_single_sensitivity=best,
                    sensitivity_difference=diff,
                )
            )
    return reports

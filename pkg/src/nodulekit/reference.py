"""Multi-reader reference-standard construction.

Readers independently mark lesions as one of three kinds: relevant nodules
(>= 3 mm, with a diameter measurement), small nodules (< 3 mm) and
non-nodule abnormalities. Relevant-nodule marks from different readers that
lie closer than the sum of their radii are merged; the merged lesion takes
the mean position and mean diameter of its members, and its agreement level
is the number of distinct readers contributing to it.

Lesions below the agreement threshold, small nodules and non-nodule marks
all become "irrelevant findings": detections on them count neither for nor
against a system under evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import cluster_by_radii
from .errors import ValidationError
from .volume import WorldPoint, as_point

KIND_NODULE = "nodule_geq3"
KIND_SMALL_NODULE = "nodule_lt3"
KIND_NON_NODULE = "non_nodule"
ANNOTATION_KINDS = (KIND_NODULE, KIND_SMALL_NODULE, KIND_NON_NODULE)

DEFAULT_MIN_AGREEMENT = 3
DEFAULT_IRRELEVANT_RADIUS_MM = 1.5


@dataclass(frozen=True)
class ReaderAnnotation:
    """One mark by one reader. ``diameter_mm`` is present iff kind is nodule_geq3."""

    seriesuid: str
    reader_id: int
    kind: str
    center: WorldPoint
    diameter_mm: float | None = None

    def __post_init__(self):
        if self.kind not in ANNOTATION_KINDS:
            raise ValidationError(f"unknown annotation kind {self.kind!r}")
        if self.kind == KIND_NODULE:
            if self.diameter_mm is None or self.diameter_mm <= 0:
                raise ValidationError(
                    f"{self.kind} annotation requires a positive diameter, got {self.diameter_mm}"
                )
        elif self.diameter_mm is not None:
            raise ValidationError(f"{self.kind} annotation must not carry a diameter")
        object.__setattr__(self, "center", as_point(self.center))


@dataclass(frozen=True)
class ReferenceNodule:
    """A merged lesion: mean center/diameter over members, reader agreement count."""

    seriesuid: str
    center: WorldPoint
    diameter_mm: float
    agreement: int
    member_ids: tuple[int, ...]

    @property
    def radius_mm(self) -> float:
        return self.diameter_mm / 2.0


@dataclass(frozen=True)
class IrrelevantFinding:
    """A lesion whose detection is scored as neither TP nor FP."""

    seriesuid: str
    center: WorldPoint
    radius_mm: float
    source_kind: str

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValidationError(f"irrelevant-finding radius must be positive, got {self.radius_mm}")


def merge_reader_annotations(rows: list[ReaderAnnotation]) -> list[ReferenceNodule]:
    """Merge relevant-nodule marks into reference lesions, per scan.

    Clustering is the transitive closure of dist(centers) < r_a + r_b on the
    original member positions/radii. Member ids are indices into ``rows``.
    Agreement counts distinct readers, so duplicate marks by one reader in a
    cluster count once.
    """
    for row in rows:
        if row.kind != KIND_NODULE:
            raise ValidationError(f"merge expects only {KIND_NODULE} rows, got {row.kind!r}")

    by_scan: dict[str, list[int]] = {}
    for idx, row in enumerate(rows):
        by_scan.setdefault(row.seriesuid, []).append(idx)

    merged: list[ReferenceNodule] = []
    for seriesuid, indices in by_scan.items():
        points = np.array([rows[i].center for i in indices], dtype=np.float64)
        radii = np.array([rows[i].diameter_mm / 2.0 for i in indices], dtype=np.float64)
        labels = cluster_by_radii(points, radii)
        for label in range(labels.max() + 1):
            members = [indices[j] for j in np.flatnonzero(labels == label)]
            centers = points[labels == label]
            diameters = 2.0 * radii[labels == label]
            readers = {rows[i].reader_id for i in members}
            merged.append(
                ReferenceNodule(
                    seriesuid=seriesuid,
                    center=as_point(centers.mean(axis=0)),
                    diameter_mm=float(diameters.mean()),
                    agreement=len(readers),
                    member_ids=tuple(members),
                )
            )
    return merged


def build_reference(
    rows: list[ReaderAnnotation],
    min_agreement: int = DEFAULT_MIN_AGREEMENT,
    irrelevant_radius_mm: float = DEFAULT_IRRELEVANT_RADIUS_MM,
) -> tuple[list[ReferenceNodule], list[IrrelevantFinding]]:
    """Split all reader marks into evaluation positives and irrelevant findings.

    Positives are merged relevant nodules with agreement >= ``min_agreement``.
    Everything else (low-agreement merged nodules, small nodules, non-nodule
    marks) becomes an irrelevant finding; diameterless kinds get the default
    irrelevant radius.
    """
    if not 1 <= min_agreement <= 4:
        raise ValidationError(f"min_agreement must be in 1..4, got {min_agreement}")

    nodule_rows = [r for r in rows if r.kind == KIND_NODULE]
    merged = merge_reader_annotations(nodule_rows)

    positives = [n for n in merged if n.agreement >= min_agreement]
    irrelevant = [
        IrrelevantFinding(
            seriesuid=n.seriesuid,
            center=n.center,
            radius_mm=n.radius_mm,
            source_kind=f"{KIND_NODULE}_agreement_{n.agreement}",
        )
        for n in merged
        if n.agreement < min_agreement
    ]
    irrelevant.extend(
        IrrelevantFinding(
            seriesuid=r.seriesuid,
            center=r.center,
            radius_mm=irrelevant_radius_mm,
            source_kind=r.kind,
        )
        for r in rows
        if r.kind != KIND_NODULE
    )
    return positives, irrelevant

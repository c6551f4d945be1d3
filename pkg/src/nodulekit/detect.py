"""Classical nodule-candidate detectors on CT volumes.

Three complementary first-stage detectors, all emitting world-space candidate
locations:

* :func:`detect_shape_index` seeds on high shape-index / curvedness voxels
  (blob-like local geometry, including sphere surfaces), grows seeds under
  relaxed thresholds and fuses nearby clusters. Runs on an isotropic grid.
* :func:`detect_subsolid` applies a double HU threshold selecting the density
  band typical of subsolid lesions, cleans up partial-volume debris with a
  morphological opening and gates components on physical volume.
* :func:`detect_large` thresholds bright solid tissue and keeps connected
  components whose equivalent diameter lies in a plausible nodule range.

Seed/expand threshold defaults of the shape-index detector are calibration
knobs for the synthetic-phantom regime, not literature values; expose and
tune them for real data. Connectivity is 26-neighbourhood throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import filters
from .clustering import merge_point_groups
from .errors import ValidationError
from .volume import Volume, WorldPoint, as_point, require_same_grid

CONNECTIVITY_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class Candidate:
    """A proposed lesion location from one detector."""

    seriesuid: str
    center: WorldPoint
    detector: str
    cluster_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))


def ball_structure(radius_voxels: float) -> np.ndarray:
    """Binary ball of the given radius (voxels), for morphological elements."""
    r = int(np.floor(radius_voxels))
    grid = np.mgrid[-r : r + 1, -r : r + 1, -r : r + 1]
    return (grid**2).sum(axis=0) <= radius_voxels**2


def resample_isotropic(volume: Volume, target_spacing_mm: float = 1.0) -> Volume:
    """Trilinear resampling onto an isotropic grid covering the same extent.

    The origin is preserved; new sample positions never extrapolate beyond the
    original voxel centers. Output is float32.
    """
    if target_spacing_mm <= 0:
        raise ValidationError(f"target spacing must be positive, got {target_spacing_mm}")
    dims = volume.dims
    if any(d < 2 for d in dims):
        raise ValidationError(f"cannot resample degenerate dims {dims}")
    spans = [(d - 1) * s for d, s in zip(dims, volume.spacing)]
    new_dims = [int(np.floor(span / target_spacing_mm + 1e-9)) + 1 for span in spans]
    # voxel coordinates of the new sample positions along each original axis
    axes = [
        np.arange(n, dtype=np.float64) * target_spacing_mm / s
        for n, s in zip(new_dims, volume.spacing)
    ]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    coords = np.stack([zz, yy, xx])
    data = ndimage.map_coordinates(
        volume.data.astype(np.float64), coords, order=1, mode="nearest"
    )
    return Volume(
        data=data.astype(np.float32),
        spacing=(target_spacing_mm,) * 3,
        origin=volume.origin,
    )


def _component_centroids(
    binary: np.ndarray, volume: Volume, inside: np.ndarray | None = None
) -> list[tuple[WorldPoint, int]]:
    """World-space centroid and voxel count per 26-connected component.

    When ``inside`` is given and a centroid rounds to a voxel outside it, the
    component voxel nearest the centroid is used instead, so reported
    candidates always lie in the allowed region.
    """
    labels, n = ndimage.label(binary, structure=CONNECTIVITY_26)
    results = []
    for idx in range(1, n + 1):
        voxels = np.argwhere(labels == idx)  # (count, 3) in (k, j, i)
        centroid = voxels.mean(axis=0)
        if inside is not None:
            k, j, i = (int(round(c)) for c in centroid)
            k = min(max(k, 0), binary.shape[0] - 1)
            j = min(max(j, 0), binary.shape[1] - 1)
            i = min(max(i, 0), binary.shape[2] - 1)
            if not inside[k, j, i]:
                nearest = voxels[np.argmin(((voxels - centroid) ** 2).sum(axis=1))]
                centroid = nearest.astype(np.float64)
        world = volume.voxel_to_world(centroid[::-1])
        results.append((as_point(world), int(len(voxels))))
    return results


@dataclass
class ShapeIndexParams:
    """Thresholds for the shape-index seed/grow detector (calibration knobs)."""

    sigma_voxels: float = 1.0
    seed_si: float = 0.85
    seed_cv_min: float = 30.0
    seed_cv_max: float = float("inf")
    expand_si: float = 0.75
    expand_cv_min: float = 15.0
    merge_radius_voxels: float = 3.0
    min_cluster_voxels: int = 1


def detect_shape_index(
    volume: Volume,
    params: ShapeIndexParams | None = None,
    seriesuid: str = "unknown",
) -> list[Candidate]:
    """Seed/grow/merge blob detector on shape index and curvedness.

    Requires an isotropic grid (run :func:`resample_isotropic` first). Seeds
    are voxels passing the strict thresholds; each seed's 26-connected region
    under the relaxed thresholds forms a cluster; clusters whose closest
    members lie within the merge radius are fused transitively. Each final
    cluster yields one candidate at its voxel center of mass.
    """
    params = params or ShapeIndexParams()
    sx, sy, sz = volume.spacing
    if not (abs(sx - sy) < 1e-9 and abs(sx - sz) < 1e-9):
        raise ValidationError(f"shape-index detector expects isotropic spacing, got {volume.spacing}")

    field = filters.shape_index(volume, params.sigma_voxels)
    seed_mask = (field.si >= params.seed_si) & (field.cv >= params.seed_cv_min)
    if np.isfinite(params.seed_cv_max):
        seed_mask &= field.cv <= params.seed_cv_max
    if not seed_mask.any():
        return []
    expand_mask = (field.si >= params.expand_si) & (field.cv >= params.expand_cv_min)
    expand_mask |= seed_mask

    labels, n = ndimage.label(expand_mask, structure=CONNECTIVITY_26)
    seeded = np.unique(labels[seed_mask])
    groups = [np.argwhere(labels == lab).astype(np.float64) for lab in seeded if lab != 0]
    groups = [g for g in groups if len(g) >= params.min_cluster_voxels]
    if not groups:
        return []

    merged_labels = merge_point_groups(groups, params.merge_radius_voxels)
    candidates = []
    for lab in range(merged_labels.max() + 1):
        members = np.concatenate([g for g, m in zip(groups, merged_labels) if m == lab])
        centroid = members.mean(axis=0)  # (k, j, i)
        world = volume.voxel_to_world(centroid[::-1])
        candidates.append(
            Candidate(
                seriesuid=seriesuid,
                center=as_point(world),
                detector="shape_index",
                cluster_size=int(len(members)),
            )
        )
    return candidates


def detect_subsolid(
    volume: Volume,
    mask: Volume,
    seriesuid: str = "unknown",
    hu_low: float = -750.0,
    hu_high: float = -300.0,
    opening_diameter_voxels: float = 3.0,
    min_volume_mm3: float = 34.0,
) -> list[Candidate]:
    """Density-band detector for subsolid lesions.

    Selects voxels in [hu_low, hu_high] inside the lung mask, opens with a
    spherical element to strip partial-volume shells at lung/vessel borders,
    and drops components smaller than ``min_volume_mm3``.
    """
    require_same_grid(volume, mask)
    hu = volume.data.astype(np.float64)
    inside = mask.data > 0
    band = (hu >= hu_low) & (hu <= hu_high) & inside
    structure = ball_structure(opening_diameter_voxels / 2.0)
    opened = ndimage.binary_opening(band, structure=structure)
    return [
        Candidate(seriesuid=seriesuid, center=center, detector="subsolid", cluster_size=count)
        for center, count in _component_centroids(opened, volume, inside=inside)
        if count * volume.voxel_volume_mm3 >= min_volume_mm3
    ]


def detect_large(
    volume: Volume,
    mask: Volume,
    seriesuid: str = "unknown",
    hu_threshold: float = -300.0,
    closing_radius_voxels: float = 1.0,
    opening_radius_voxels: float = 1.0,
    min_diameter_mm: float = 8.0,
    max_diameter_mm: float = 40.0,
) -> list[Candidate]:
    """Threshold detector for large solid lesions.

    Keeps 26-connected bright components (>= hu_threshold, inside the mask)
    whose equivalent diameter (6V/pi)^(1/3) lies in [min, max] mm. A closing
    then opening (both configurable) regularises the binary mask first.
    """
    require_same_grid(volume, mask)
    if min_diameter_mm > max_diameter_mm:
        raise ValidationError("min_diameter_mm must not exceed max_diameter_mm")
    hu = volume.data.astype(np.float64)
    inside = mask.data > 0
    solid = (hu >= hu_threshold) & inside
    if closing_radius_voxels > 0:
        solid = ndimage.binary_closing(solid, structure=ball_structure(closing_radius_voxels))
    if opening_radius_voxels > 0:
        solid = ndimage.binary_opening(solid, structure=ball_structure(opening_radius_voxels))
    solid &= inside

    voxel_volume = volume.voxel_volume_mm3
    out = []
    for center, count in _component_centroids(solid, volume, inside=inside):
        equivalent_diameter = (6.0 * count * voxel_volume / np.pi) ** (1.0 / 3.0)
        if min_diameter_mm <= equivalent_diameter <= max_diameter_mm:
            out.append(
                Candidate(seriesuid=seriesuid, center=center, detector="large", cluster_size=count)
            )
    return out

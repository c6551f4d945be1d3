"""Regular-grid 3D scalar volumes and world/voxel geometry.

Conventions used throughout the toolkit:

* ``dims``, ``spacing`` and ``origin`` are given in (x, y, z) order.
* The data array is indexed ``[k, j, i]`` (z slowest, x fastest), matching
  the x-fastest serialization order of the on-disk format.
* The world position of voxel (i, j, k) is ``origin + (i, j, k) * spacing``,
  in the frame defined by the volume header itself. No anatomical
  reorientation is ever applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# World-space coordinate in mm, (x, y, z) order.
WorldPoint = tuple[float, float, float]

SUPPORTED_DTYPES = (np.dtype(np.int16), np.dtype(np.uint8), np.dtype(np.float32))


def as_point(value) -> WorldPoint:
    """Coerce a length-3 sequence into a finite (x, y, z) tuple of floats."""
    seq = tuple(float(v) for v in value)
    if len(seq) != 3:
        raise ValidationError(f"expected a 3-vector, got {len(seq)} components")
    if not all(math.isfinite(v) for v in seq):
        raise ValidationError(f"non-finite point {seq}")
    return seq


@dataclass(eq=False)
class Volume:
    """A 3D image on a regular axis-aligned grid.

    ``data`` is made read-only on construction: volumes are immutable and may
    be shared freely across workers. Supported element types are int16
    (CT in HU), uint8 (masks) and float32 (filter outputs).
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extra_header: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValidationError(f"volume data must be 3D, got ndim={arr.ndim}")
        if arr.dtype not in SUPPORTED_DTYPES:
            raise ValidationError(
                f"unsupported element dtype {arr.dtype}; expected one of "
                f"{[str(d) for d in SUPPORTED_DTYPES]}"
            )
        view = arr.view()
        view.flags.writeable = False
        self.data = view
        self.spacing = as_point(self.spacing)
        self.origin = as_point(self.origin)
        if any(s <= 0 for s in self.spacing):
            raise ValidationError(f"spacing components must be positive, got {self.spacing}")

    # -- geometry ---------------------------------------------------------

    @property
    def dims(self) -> tuple[int, int, int]:
        """Grid size in (x, y, z) order."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def world_extent(self) -> tuple[WorldPoint, WorldPoint]:
        """Voxel-center bounding box (low corner, high corner) in world mm."""
        lo = self.origin
        hi = tuple(o + (n - 1) * s for o, n, s in zip(self.origin, self.dims, self.spacing))
        return lo, hi

    def world_to_voxel(self, point) -> np.ndarray:
        """Continuous voxel coordinates (x, y, z order); no rounding or bounds check."""
        p = np.asarray(point, dtype=np.float64)
        return (p - np.array(self.origin)) / np.array(self.spacing)

    def voxel_to_world(self, index) -> np.ndarray:
        """World position of a (possibly fractional) voxel index (x, y, z order)."""
        idx = np.asarray(index, dtype=np.float64)
        return np.array(self.origin) + idx * np.array(self.spacing)

    def value_at(self, i: int, j: int, k: int):
        """Bounds-checked voxel access by (i, j, k) = (x, y, z) index."""
        nx, ny, nz = self.dims
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            raise IndexError(f"voxel ({i}, {j}, {k}) outside dims {self.dims}")
        return self.data[k, j, i]

    def contains_world(self, point) -> bool:
        """True if the world point lies within the voxel-center extent."""
        lo, hi = self.world_extent
        p = as_point(point)
        return all(l <= v <= h for v, l, h in zip(p, lo, hi))

    # -- equality ---------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
            and self.spacing == other.spacing
            and self.origin == other.origin
            and self.extra_header == other.extra_header
        )


def same_grid(a: Volume, b: Volume, tol: float = 1e-9) -> bool:
    """True when two volumes share dims, spacing and origin (within tol)."""
    return (
        a.dims == b.dims
        and all(abs(x - y) <= tol for x, y in zip(a.spacing, b.spacing))
        and all(abs(x - y) <= tol for x, y in zip(a.origin, b.origin))
    )


def require_same_grid(a: Volume, b: Volume, what: str = "mask") -> None:
    if not same_grid(a, b):
        raise ValidationError(
            f"{what} grid mismatch: dims {a.dims} vs {b.dims}, "
            f"spacing {a.spacing} vs {b.spacing}, origin {a.origin} vs {b.origin}"
        )

"""Synthetic CT-like phantoms with known ground truth.

A phantom is a noisy constant background into which spherical "nodules" and
cylindrical "vessel" distractors are painted in world coordinates. Spheres
carry a linear HU ramp over their outer ``edge_softness_mm`` shell, so the
core (sphere eroded by the softness) sits exactly at the peak HU and the
nominal diameter is the outer boundary. Vessels are painted first and
nodules second, so ground-truth nodule voxels are never overwritten.

Generation is a pure function of the PhantomSpec: a fixed seed reproduces
the volume bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .csvio import AnnotationRow
from .errors import FormatError, ValidationError
from .volume import Volume, WorldPoint, as_point

DEFAULT_BACKGROUND_HU = -850.0


@dataclass(frozen=True)
class SphereInsert:
    center: WorldPoint
    diameter_mm: float
    peak_hu: float
    edge_softness_mm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if self.diameter_mm <= 0:
            raise ValidationError(f"sphere diameter must be positive, got {self.diameter_mm}")
        if self.edge_softness_mm < 0:
            raise ValidationError("edge softness must be non-negative")


@dataclass(frozen=True)
class CylinderInsert:
    start: WorldPoint
    end: WorldPoint
    radius_mm: float
    hu: float
    edge_softness_mm: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "start", as_point(self.start))
        object.__setattr__(self, "end", as_point(self.end))
        if self.radius_mm <= 0:
            raise ValidationError(f"cylinder radius must be positive, got {self.radius_mm}")


@dataclass(frozen=True)
class PhantomSpec:
    series_id: str
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    background_hu: float = DEFAULT_BACKGROUND_HU
    noise_sigma_hu: float = 0.0
    nodules: tuple[SphereInsert, ...] = ()
    vessels: tuple[CylinderInsert, ...] = ()
    seed: int = 0
    lung_margin_mm: float = 8.0


@dataclass
class PhantomResult:
    volume: Volume
    mask: Volume
    annotations: list[AnnotationRow] = field(default_factory=list)


def _axes(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nx, ny, nz = spec.dims
    xs = spec.origin[0] + np.arange(nx) * spec.spacing[0]
    ys = spec.origin[1] + np.arange(ny) * spec.spacing[1]
    zs = spec.origin[2] + np.arange(nz) * spec.spacing[2]
    return xs, ys, zs


def _crop(axis: np.ndarray, low: float, high: float) -> slice:
    """Index slice of axis samples within [low, high] (possibly empty)."""
    start = int(np.searchsorted(axis, low, side="left"))
    stop = int(np.searchsorted(axis, high, side="right"))
    return slice(start, stop)


def _soft_weight(distance: np.ndarray, radius: float, softness: float) -> np.ndarray:
    """1 in the core, linear ramp to 0 across the outer softness shell."""
    if softness <= 0:
        return (distance <= radius).astype(np.float64)
    return np.clip((radius - distance) / softness, 0.0, 1.0)


def generate_phantom(spec: PhantomSpec) -> PhantomResult:
    """Render the phantom volume, its box lung mask, and ground-truth rows."""
    if any(d <= 0 for d in spec.dims):
        raise ValidationError(f"phantom dims must be positive, got {spec.dims}")
    if spec.noise_sigma_hu < 0:
        raise ValidationError("noise sigma must be non-negative")

    lo = spec.origin
    hi = tuple(o + (n - 1) * s for o, n, s in zip(spec.origin, spec.dims, spec.spacing))
    for nodule in spec.nodules:
        r = nodule.diameter_mm / 2.0
        if any(c - r < l or c + r > h for c, l, h in zip(nodule.center, lo, hi)):
            raise ValidationError(
                f"nodule at {nodule.center} (diameter {nodule.diameter_mm} mm) "
                f"extends outside the volume extent {lo}..{hi}"
            )

    xs, ys, zs = _axes(spec)
    nx, ny, nz = spec.dims
    hu = np.full((nz, ny, nx), spec.background_hu, dtype=np.float64)

    for vessel in spec.vessels:
        s = np.array(vessel.start)
        direction = np.array(vessel.end) - s
        length_sq = float(direction @ direction)
        if length_sq == 0:
            raise ValidationError("cylinder start and end coincide")
        reach = vessel.radius_mm + vessel.edge_softness_mm
        lo_box = np.minimum(vessel.start, vessel.end) - reach
        hi_box = np.maximum(vessel.start, vessel.end) + reach
        sl = tuple(_crop(ax, l, h) for ax, l, h in zip((zs, ys, xs), lo_box[::-1], hi_box[::-1]))
        zg, yg, xg = np.meshgrid(zs[sl[0]], ys[sl[1]], xs[sl[2]], indexing="ij")
        px, py, pz = xg - s[0], yg - s[1], zg - s[2]
        t = np.clip((px * direction[0] + py * direction[1] + pz * direction[2]) / length_sq, 0, 1)
        dx = px - t * direction[0]
        dy = py - t * direction[1]
        dz = pz - t * direction[2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        w = _soft_weight(dist, vessel.radius_mm, vessel.edge_softness_mm)
        hu[sl] = (1.0 - w) * hu[sl] + w * vessel.hu

    for nodule in spec.nodules:
        cx, cy, cz = nodule.center
        reach = nodule.diameter_mm / 2.0 + nodule.edge_softness_mm
        sl = (
            _crop(zs, cz - reach, cz + reach),
            _crop(ys, cy - reach, cy + reach),
            _crop(xs, cx - reach, cx + reach),
        )
        zg, yg, xg = np.meshgrid(zs[sl[0]], ys[sl[1]], xs[sl[2]], indexing="ij")
        dist = np.sqrt((xg - cx) ** 2 + (yg - cy) ** 2 + (zg - cz) ** 2)
        w = _soft_weight(dist, nodule.diameter_mm / 2.0, nodule.edge_softness_mm)
        hu[sl] = (1.0 - w) * hu[sl] + w * nodule.peak_hu

    if spec.noise_sigma_hu > 0:
        rng = np.random.default_rng(spec.seed)
        hu = hu + rng.normal(0.0, spec.noise_sigma_hu, size=hu.shape)

    data = np.clip(np.rint(hu), -32768, 32767).astype(np.int16)
    volume = Volume(data=data, spacing=spec.spacing, origin=spec.origin)

    margin = spec.lung_margin_mm
    in_x = (xs >= lo[0] + margin) & (xs <= hi[0] - margin)
    in_y = (ys >= lo[1] + margin) & (ys <= hi[1] - margin)
    in_z = (zs >= lo[2] + margin) & (zs <= hi[2] - margin)
    box = in_z[:, None, None] & in_y[None, :, None] & in_x[None, None, :]
    mask = Volume(data=box.astype(np.uint8), spacing=spec.spacing, origin=spec.origin)

    annotations = [
        AnnotationRow(seriesuid=spec.series_id, center=n.center, diameter_mm=n.diameter_mm)
        for n in spec.nodules
    ]
    return PhantomResult(volume=volume, mask=mask, annotations=annotations)


def random_study_spec(
    seed: int,
    dims: tuple[int, int, int] = (128, 128, 128),
    noise_sigma_hu: float = 15.0,
) -> tuple[PhantomSpec, list[SphereInsert], list[SphereInsert]]:
    """Randomized benchmark phantom: solid spheres, subsolid spheres, vessels.

    Inserts are rejection-sampled with generous clearances so no two objects
    can share a connected component after thresholding. Returns the spec plus
    the solid (-50 HU, 10-30 mm) and subsolid (-500 HU, 6-12 mm) insert lists
    separately, since the two detector families are benchmarked against
    different truth subsets.
    """
    rng = np.random.default_rng(seed)
    margin = 8.0
    lo = np.zeros(3)
    hi = np.array([d - 1.0 for d in dims])
    placed: list[tuple[WorldPoint, float]] = []

    def place(radius: float, clearance: float = 12.0) -> WorldPoint:
        for _ in range(500):
            center = rng.uniform(lo + margin + radius + 3.0, hi - margin - radius - 3.0)
            if all(
                np.linalg.norm(center - np.array(c)) >= radius + r + clearance
                for c, r in placed
            ):
                point = as_point(center)
                placed.append((point, radius))
                return point
        raise ValidationError("could not place an insert without overlap")

    solids = []
    for _ in range(int(rng.integers(1, 4))):
        diameter = float(rng.uniform(10.0, 30.0))
        solids.append(SphereInsert(place(diameter / 2.0), diameter, -50.0, 1.0))
    subsolids = []
    for _ in range(int(rng.integers(1, 3))):
        diameter = float(rng.uniform(6.0, 12.0))
        subsolids.append(SphereInsert(place(diameter / 2.0), diameter, -500.0, 0.5))

    vessels = []
    for axis in rng.permutation(3)[:3]:
        for _ in range(500):
            start = rng.uniform(lo + 2, hi - 2)
            end = start.copy()
            start[int(axis)] = lo[int(axis)] + 2
            end[int(axis)] = hi[int(axis)] - 2
            radius = float(rng.uniform(1.2, 2.0))
            if all(
                _segment_distance(np.array(c), start, end) >= r + radius + 8.0
                for c, r in placed
            ):
                vessels.append(
                    CylinderInsert(
                        as_point(start), as_point(end), radius, float(rng.uniform(-60, 40))
                    )
                )
                break

    spec = PhantomSpec(
        series_id=f"study-{seed:03d}",
        dims=dims,
        noise_sigma_hu=noise_sigma_hu,
        seed=seed,
        nodules=tuple(solids + subsolids),
        vessels=tuple(vessels),
    )
    return spec, solids, subsolids


def _segment_distance(point: np.ndarray, start: np.ndarray, end: np.ndarray) -> float:
    direction = end - start
    t = np.clip(np.dot(point - start, direction) / np.dot(direction, direction), 0.0, 1.0)
    return float(np.linalg.norm(point - (start + t * direction)))


# -- plain-text spec files --------------------------------------------------
#
# key = value lines, '#' comments. Repeated lines add inserts:
#   nodule = cx cy cz diameter_mm peak_hu [edge_softness_mm]
#   vessel = x0 y0 z0 x1 y1 z1 radius_mm hu [edge_softness_mm]

def read_phantom_spec(path) -> PhantomSpec:
    scalars: dict[str, str] = {}
    nodules: list[SphereInsert] = []
    vessels: list[CylinderInsert] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                if key == "nodule":
                    parts = [float(p) for p in value.split()]
                    if len(parts) not in (5, 6):
                        raise ValueError("expected 5 or 6 numbers")
                    nodules.append(SphereInsert(tuple(parts[0:3]), parts[3], parts[4],
                                                parts[5] if len(parts) == 6 else 1.0))
                elif key == "vessel":
                    parts = [float(p) for p in value.split()]
                    if len(parts) not in (8, 9):
                        raise ValueError("expected 8 or 9 numbers")
                    vessels.append(CylinderInsert(tuple(parts[0:3]), tuple(parts[3:6]),
                                                  parts[6], parts[7],
                                                  parts[8] if len(parts) == 9 else 0.5))
                else:
                    scalars[key] = value
            except (ValueError, ValidationError) as exc:
                raise FormatError(f"{path}:{lineno}: bad {key} line: {exc}") from exc

    def _floats(key: str, default):
        if key not in scalars:
            return default
        return tuple(float(p) for p in scalars[key].split())

    try:
        dims = tuple(int(p) for p in scalars["dims"].split())
        if len(dims) != 3:
            raise ValueError("dims needs 3 integers")
        return PhantomSpec(
            series_id=scalars.get("series_id", "phantom-000"),
            dims=dims,
            spacing=_floats("spacing", (1.0, 1.0, 1.0)),
            origin=_floats("origin", (0.0, 0.0, 0.0)),
            background_hu=float(scalars.get("background_hu", DEFAULT_BACKGROUND_HU)),
            noise_sigma_hu=float(scalars.get("noise_sigma", 0.0)),
            nodules=tuple(nodules),
            vessels=tuple(vessels),
            seed=int(scalars.get("seed", 0)),
            lung_margin_mm=float(scalars.get("lung_margin_mm", 8.0)),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing required key {exc}") from exc
    except (ValueError, ValidationError) as exc:
        raise FormatError(f"{path}: invalid phantom spec: {exc}") from exc

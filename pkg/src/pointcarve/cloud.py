"""Core point-cloud types: clouds, bounding ranges, and point-block assembly.

A point-block is the union of a partial cloud and a set of filler points
spread through the partial's estimated bounding range; it is the raw
material the carving stage whittles down to a coarse completion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_EPS_BOX_FRAC = 1e-3


def _as_points_array(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64, copy=True)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite values")
    return arr


@dataclass(frozen=True)
class Point3:
    """A single finite 3D point."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("Point3 coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points with optional per-point feature vectors.

    `points` is an (N, 3) float64 array, `features` an optional (N, F) array.
    Arrays are copied on construction and marked read-only; treat instances
    as immutable values.
    """

    points: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points_array(self.points)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.features is not None:
            feats = np.array(self.features, dtype=np.float64, copy=True)
            if feats.ndim != 2 or feats.shape[0] != len(pts):
                raise ValueError(
                    f"features must have shape ({len(pts)}, F), got {feats.shape}"
                )
            if not np.all(np.isfinite(feats)):
                raise ValueError("features contain non-finite values")
            feats.flags.writeable = False
            object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def feature_dim(self) -> int | None:
        return None if self.features is None else self.features.shape[1]

    def point(self, i: int) -> Point3:
        x, y, z = self.points[i]
        return Point3(float(x), float(y), float(z))

    @staticmethod
    def from_points(points: list[Point3]) -> "PointCloud":
        return PointCloud(np.array([[p.x, p.y, p.z] for p in points]).reshape(-1, 3))

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)))


@dataclass(frozen=True)
class BoundingRange:
    """Axis-aligned box; `lo` strictly below `hi` on every axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64, copy=True).reshape(3)
        hi = np.array(self.hi, dtype=np.float64, copy=True).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("range corners must be finite")
        if not np.all(lo < hi):
            raise ValueError(f"range must satisfy lo < hi per axis, got lo={lo} hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def min_corner(self) -> Point3:
        return Point3(*map(float, self.lo))

    @property
    def max_corner(self) -> Point3:
        return Point3(*map(float, self.hi))

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lo, self.hi)


@dataclass(frozen=True)
class PointBlock:
    """Partial cloud plus filler points, with provenance kept separate."""

    partial: PointCloud
    sampled: PointCloud
    range: BoundingRange
    clamped_count: int = field(default=0, compare=False)

    def __post_init__(self):
        for name, cloud in (("partial", self.partial), ("sampled", self.sampled)):
            if len(cloud) and not np.all(self.range.contains(cloud.points)):
                raise ValueError(f"{name} points fall outside the block range")

    def all_points(self) -> np.ndarray:
        """Concatenated (|partial| + |sampled|, 3) coordinates, partial first."""
        return np.concatenate([self.partial.points, self.sampled.points], axis=0)

    def __len__(self) -> int:
        return len(self.partial) + len(self.sampled)


def compute_bounds(
    cloud: PointCloud,
    padding: float = 0.0,
    eps_box: float | None = None,
    eps_box_frac: float = DEFAULT_EPS_BOX_FRAC,
) -> BoundingRange:
    """Tight axis-aligned bounds expanded symmetrically by `padding` per side.

    Degenerate axes (zero extent) are widened to the absolute `eps_box`,
    which defaults to `eps_box_frac` times the largest extent. A fully
    degenerate cloud (single point) therefore errors unless an explicit
    eps_box > 0 is given.
    """
    if len(cloud) == 0:
        raise ValueError("empty input")
    if padding < 0:
        raise ValueError("padding must be >= 0")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    extent = hi - lo
    if eps_box is None:
        eps_box = eps_box_frac * float(extent.max())
    if eps_box <= 0 and not np.all(extent > 0):
        raise ValueError("degenerate cloud and eps_box is zero")
    lo = lo - padding * extent
    hi = hi + padding * extent
    degenerate = extent == 0
    lo = np.where(degenerate, lo - eps_box / 2, lo)
    hi = np.where(degenerate, hi + eps_box / 2, hi)
    return BoundingRange(lo, hi)


def sample_block_points(
    range: BoundingRange,
    n_per_axis: int,
    mode: str = "lattice",
    seed: int = 0,
) -> PointCloud:
    """n_per_axis^3 filler points spread through the range.

    Lattice mode places them at the centers of an n^3 regular subdivision
    (deterministic); random mode draws them uniformly with the given seed.
    """
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be >= 2")
    if mode == "lattice":
        ticks = [
            range.lo[a] + (np.arange(n_per_axis) + 0.5) / n_per_axis * range.extent[a]
            for a in (0, 1, 2)
        ]
        gx, gy, gz = np.meshgrid(*ticks, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        pts = range.lo + rng.random((n_per_axis**3, 3)) * range.extent
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return PointCloud(pts)


def build_point_block(
    partial: PointCloud,
    range: BoundingRange,
    n_per_axis: int,
    mode: str = "lattice",
    seed: int = 0,
) -> PointBlock:
    """Assemble a point-block; out-of-range partial points are clamped.

    The number of clamped points is reported on the block rather than raised,
    to stay robust to noisy range estimates.
    """
    sampled = sample_block_points(range, n_per_axis, mode, seed)
    return _assemble_block(partial, sampled, range)


def _assemble_block(partial: PointCloud, sampled: PointCloud, range: BoundingRange) -> PointBlock:
    inside = range.contains(partial.points) if len(partial) else np.zeros(0, dtype=bool)
    clamped = int(len(partial) - inside.sum())
    pts = range.clamp(partial.points) if clamped else partial.points
    return PointBlock(
        partial=PointCloud(pts, partial.features),
        sampled=sampled,
        range=range,
        clamped_count=clamped,
    )


def mirror_symmetric_block(
    partial: PointCloud, plane_axis: str | int, plane_offset: float
) -> PointCloud:
    """Union of the cloud and its reflection across an axis-aligned plane."""
    axis = {"x": 0, "y": 1, "z": 2}.get(plane_axis, plane_axis)
    if axis not in (0, 1, 2):
        raise ValueError(f"plane_axis must be one of x/y/z, got {plane_axis!r}")
    mirrored = partial.points.copy()
    mirrored[:, axis] = 2.0 * plane_offset - mirrored[:, axis]
    return PointCloud(np.concatenate([partial.points, mirrored], axis=0))


@dataclass(frozen=True)
class UnitCubeTransform:
    """Record of the isotropic normalization; `invert` undoes `apply`."""

    center: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (points - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return points / self.scale + self.center


def normalize_unit_cube(cloud: PointCloud) -> tuple[PointCloud, UnitCubeTransform]:
    """Isotropically scale + translate so the tight box fits in [-0.5, 0.5]^3.

    The longest axis spans exactly [-0.5, 0.5]; the inverse transform is
    returned for de-normalization.
    """
    if len(cloud) == 0:
        raise ValueError("empty input")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    extent = float((hi - lo).max())
    if extent == 0 or not np.isfinite(1.0 / extent):
        raise ValueError("all points coincident; cannot normalize")
    transform = UnitCubeTransform(center=(lo + hi) / 2.0, scale=1.0 / extent)
    return PointCloud(transform.apply(cloud.points), cloud.features), transform


def subsample_fixed(
    cloud: PointCloud, m: int, method: str = "random", seed: int = 0
) -> PointCloud:
    """Exactly m points; oversampling repeats points, methods are seeded."""
    n = len(cloud)
    if n == 0:
        raise ValueError("empty input")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    if method == "random":
        if m <= n:
            idx = rng.permutation(n)[:m]
        else:
            idx = np.concatenate(
                [np.tile(np.arange(n), m // n), rng.choice(n, m % n, replace=False)]
            )
    elif method == "farthest-point":
        idx = _farthest_point_indices(cloud.points, min(m, n), rng)
        if m > n:
            idx = np.concatenate([idx, idx[np.arange(m - n) % n]])
    else:
        raise ValueError(f"unknown subsample method {method!r}")
    feats = None if cloud.features is None else cloud.features[idx]
    return PointCloud(cloud.points[idx], feats)


def _farthest_point_indices(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = rng.integers(n)
    dist = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for k in range(1, m):
        chosen[k] = int(np.argmax(dist))
        dist = np.minimum(dist, np.sum((points - points[chosen[k]]) ** 2, axis=1))
    return chosen

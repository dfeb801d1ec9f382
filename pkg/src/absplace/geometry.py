"""Regions, regular 3D grids, buildings and flight-grid construction.

All coordinates are in meters. Grid points are enumerated x-fastest, then y,
then z, which fixes the column order of every capacity matrix built on top
of a flight grid.
"""

from dataclasses import dataclass, field

import numpy as np


class EmptyFlightGridError(ValueError):
    """Every candidate flight-grid point was excluded."""


@dataclass(frozen=True)
class Region:
    min_corner: tuple
    max_corner: tuple

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("region corners must be 3-vectors")
        if not np.all(lo < hi):
            raise ValueError(f"min_corner {tuple(lo)} must be < max_corner {tuple(hi)}")
        object.__setattr__(self, "min_corner", tuple(float(v) for v in lo))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in hi))

    @property
    def size(self):
        return np.subtract(self.max_corner, self.min_corner)


@dataclass(frozen=True)
class Grid3:
    """Regular grid; point ``i`` sits at ``origin + i * spacing``."""

    origin: tuple
    spacing: tuple
    dims: tuple

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        spacing = np.asarray(self.spacing, dtype=float)
        dims = tuple(int(d) for d in self.dims)
        if origin.shape != (3,) or spacing.shape != (3,) or len(dims) != 3:
            raise ValueError("origin, spacing and dims must have 3 entries")
        if not np.all(spacing > 0):
            raise ValueError("grid spacing must be positive")
        if min(dims) < 1:
            raise ValueError("grid dims must be positive")
        object.__setattr__(self, "origin", tuple(float(v) for v in origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in spacing))
        object.__setattr__(self, "dims", dims)

    @property
    def num_points(self):
        return int(np.prod(self.dims))

    @classmethod
    def covering(cls, region, dims):
        """Voxel grid whose cells tile ``region`` exactly (points at cell centers)."""
        dims = np.asarray(dims, dtype=int)
        spacing = region.size / dims
        origin = np.asarray(region.min_corner) + spacing / 2
        return cls(tuple(origin), tuple(spacing), tuple(dims))

    def points(self):
        """All grid points as an ``(num_points, 3)`` array, x-fastest."""
        axes = [self.origin[j] + self.spacing[j] * np.arange(self.dims[j]) for j in range(3)]
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


def grid_point(grid, index):
    """Coordinates of the grid point with integer index vector ``index``."""
    index = np.asarray(index)
    if index.shape != (3,):
        raise ValueError("index must have 3 entries")
    if np.any(index < 0) or np.any(index >= np.asarray(grid.dims)):
        raise IndexError(f"index {tuple(index)} outside grid dims {grid.dims}")
    return np.asarray(grid.origin) + index * np.asarray(grid.spacing)


@dataclass(frozen=True)
class Building:
    """Axis-aligned box standing on z = 0.

    ``footprint`` is ``((x_min, x_max), (y_min, y_max))``.
    """

    footprint: tuple
    height: float
    absorption: float = 1.0

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.footprint
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate building footprint {self.footprint}")
        if self.height <= 0:
            raise ValueError("building height must be positive")
        if self.absorption < 0:
            raise ValueError("building absorption must be non-negative")
        object.__setattr__(self, "footprint", ((float(x0), float(x1)), (float(y0), float(y1))))

    def contains(self, pts, strict=True):
        """Boolean mask of points inside the box (strict interior by default)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        (x0, x1), (y0, y1) = self.footprint
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        if strict:
            return (x > x0) & (x < x1) & (y > y0) & (y < y1) & (z < self.height)
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1) & (z <= self.height)

    def covers_footprint(self, xy, strict=True):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        (x0, x1), (y0, y1) = self.footprint
        if strict:
            return (xy[:, 0] > x0) & (xy[:, 0] < x1) & (xy[:, 1] > y0) & (xy[:, 1] < y1)
        return (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)


def inside_any(buildings, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    mask = np.zeros(len(pts), dtype=bool)
    for b in buildings:
        mask |= b.contains(pts)
    return mask


def uniform_grid(region, dims):
    """Grid with ``dims`` points per axis spanning ``region`` end to end.

    An axis with a single point sits at the region's midpoint.
    """
    dims = np.asarray(dims, dtype=int)
    if dims.shape != (3,) or np.any(dims < 1):
        raise ValueError("flight grid dims must be 3 positive integers")
    lo = np.asarray(region.min_corner)
    size = region.size
    spacing = np.where(dims > 1, size / np.maximum(dims - 1, 1), size)
    origin = np.where(dims > 1, lo, lo + size / 2)
    return Grid3(tuple(origin), tuple(spacing), tuple(dims))


def build_flight_grid(region, dims, min_height, buildings=()):
    """Candidate ABS positions: a uniform grid minus low and in-building points.

    Returns an ``(G, 3)`` array ordered x-fastest, then y, then z.
    """
    if not region.min_corner[2] <= min_height <= region.max_corner[2]:
        raise ValueError(
            f"min_height {min_height} outside region z-extent "
            f"[{region.min_corner[2]}, {region.max_corner[2]}]"
        )
    pts = uniform_grid(region, dims).points()
    keep = pts[:, 2] >= min_height
    keep &= ~inside_any(buildings, pts)
    if not keep.any():
        raise EmptyFlightGridError("all flight-grid points were excluded")
    return pts[keep]


@dataclass
class SpatialLossField:
    """Piecewise-constant absorption (dB/m) on the voxels of ``grid``."""

    tensor: np.ndarray
    grid: Grid3 = field(repr=False)

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.shape != self.grid.dims:
            raise ValueError(f"SLF shape {self.tensor.shape} != grid dims {self.grid.dims}")
        if not np.all(np.isfinite(self.tensor)) or np.any(self.tensor < 0):
            raise ValueError("SLF entries must be finite and non-negative")


def voxelize_slf(buildings, grid):
    """Rasterize buildings into an SLF; overlaps keep the largest absorption."""
    centers = grid.points()
    values = np.zeros(len(centers))
    for b in buildings:
        inside = b.contains(centers, strict=False)
        values[inside] = np.maximum(values[inside], b.absorption)
    # points() is x-fastest, i.e. C-order over (z, y, x)
    tensor = values.reshape(grid.dims[::-1]).transpose(2, 1, 0)
    return SpatialLossField(tensor.copy(), grid)

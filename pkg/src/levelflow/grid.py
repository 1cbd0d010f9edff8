"""Uniform Cartesian grids, scalar fields, narrow bands, snapshot file IO.

A grid samples a rectangular box in R^2 or R^3 at cell centers with uniform
spacing ``h`` on every axis, surrounded by a ghost layer.  Scalar fields are
dense float64 arrays over the full (ghost-padded) index space.  The snapshot
file format is a one-line JSON header followed by the raw row-major
little-endian float64 payload; see ``save_snapshot`` for the exact layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import LevelFlowError

SNAPSHOT_FORMAT = "levelflow-snapshot"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid with a ghost layer.

    ``counts`` are interior cells per axis; the stored arrays additionally
    carry ``ghost`` cells on each side.  ``origin`` is the physical
    coordinate of array index 0 (a ghost cell), so the center of array
    index ``i`` is ``origin + i*h`` componentwise.
    """

    dim: int
    counts: tuple[int, ...]
    spacing: float
    origin: tuple[float, ...]
    ghost: int = 3

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise LevelFlowError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.counts) != self.dim or len(self.origin) != self.dim:
            raise LevelFlowError("counts/origin length must match dim")
        if self.spacing <= 0:
            raise LevelFlowError("spacing must be positive")
        if any(c < 8 for c in self.counts):
            raise LevelFlowError("need at least 8 cells per axis")
        if self.ghost < 2:
            raise LevelFlowError("ghost layer width must be at least 2")

    @classmethod
    def centered(cls, extent: float, counts: int, dim: int = 2, ghost: int = 3) -> "Grid":
        """Grid over the box [-extent/2, extent/2]^dim with ``counts`` cells per axis."""
        h = extent / counts
        origin = tuple((-extent / 2 + (0.5 - ghost) * h) for _ in range(dim))
        return cls(dim=dim, counts=(counts,) * dim, spacing=h, origin=origin, ghost=ghost)

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def shape(self) -> tuple[int, ...]:
        """Full array shape including ghost cells."""
        return tuple(c + 2 * self.ghost for c in self.counts)

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(c * self.spacing for c in self.counts)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Physical coordinates of all array indices (ghosts included) along one axis."""
        n = self.shape[axis]
        return self.origin[axis] + self.spacing * np.arange(n)

    def meshgrid(self) -> list[np.ndarray]:
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def interior_slices(self) -> tuple[slice, ...]:
        return tuple(slice(self.ghost, self.ghost + c) for c in self.counts)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.interior_slices()] = True
        return m

    def cell_center(self, index: tuple[int, ...]) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.asarray(index, dtype=float)

    def index_near(self, point) -> tuple[int, ...]:
        """Array index of the cell whose center is nearest to ``point``."""
        rel = (np.asarray(point, dtype=float) - np.asarray(self.origin)) / self.spacing
        idx = np.rint(rel).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def refine(self) -> "Grid":
        """Dyadically refined grid over the same physical box."""
        h2 = self.spacing / 2
        origin = tuple(
            o + (self.ghost - 0.5) * self.spacing - (self.ghost - 0.5) * h2
            for o in self.origin
        )
        return Grid(
            dim=self.dim,
            counts=tuple(2 * c for c in self.counts),
            spacing=h2,
            origin=origin,
            ghost=self.ghost,
        )


@dataclass
class ScalarField:
    """Discrete scalar function on a grid at a single time."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise LevelFlowError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    def validate_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise LevelFlowError("field contains non-finite values")

    def copy(self, time: float | None = None) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.time if time is None else time)

    def with_values(self, values: np.ndarray, time: float | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.time if time is None else time)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of the field at physical points, shape (m, dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - np.asarray(self.grid.origin)) / self.grid.spacing
        return ndimage.map_coordinates(self.values, rel.T, order=1, mode="nearest")


@dataclass
class Band:
    """Set of grid cells near the interface.

    ``band_radius > 0`` marks a value band ``{|u| <= band_radius}``;
    ``band_radius == 0`` marks the edge-incident interface cells.
    """

    mask: np.ndarray
    band_radius: float

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def indices(self) -> np.ndarray:
        """(m, dim) array of cell indices, in C order."""
        return np.argwhere(self.mask)

    def __bool__(self) -> bool:
        return self.count > 0


def interface_cells(f: ScalarField) -> Band:
    """Cells incident to a grid edge whose endpoint values have opposite or zero sign.

    An empty band is a valid result (the surface is extinct).
    """
    v = f.values
    mask = np.zeros(v.shape, dtype=bool)
    for axis in range(v.ndim):
        lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(v.ndim))
        hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(v.ndim))
        crossing = v[lo] * v[hi] <= 0.0
        # exclude edges interior to a uniform-sign region: both strictly same sign
        # is already excluded by the product test; uniform zero edges stay included
        both_pos = (v[lo] > 0) & (v[hi] > 0)
        both_neg = (v[lo] < 0) & (v[hi] < 0)
        crossing &= ~(both_pos | both_neg)
        mask[lo] |= crossing
        mask[hi] |= crossing
    return Band(mask=mask, band_radius=0.0)


def value_band(f: ScalarField, band_radius: float) -> Band:
    """Cells with ``|u| <= band_radius``."""
    return Band(mask=np.abs(f.values) <= band_radius, band_radius=band_radius)


def interior_inradius(mask: np.ndarray, h: float) -> float:
    """Radius of the largest grid-metric ball contained in the cell set.

    Computed from the Euclidean distance transform of the mask; a set with no
    full cell neighborhood (for example a one-cell-thick line) has inradius 0.
    """
    if not np.any(mask):
        return 0.0
    dist = ndimage.distance_transform_edt(mask, sampling=h)
    return float(max(0.0, dist.max() - h))


def ghost_extrapolate(values: np.ndarray, ghost: int) -> None:
    """Fill ghost layers in place by linear extrapolation from the interior edge."""
    for axis in range(values.ndim):
        v = np.moveaxis(values, axis, 0)
        n = v.shape[0]
        for k in range(ghost - 1, -1, -1):
            v[k] = 2.0 * v[k + 1] - v[k + 2]
            v[n - 1 - k] = 2.0 * v[n - 2 - k] - v[n - 3 - k]


def save_snapshot(f: ScalarField, path) -> None:
    """Write a snapshot file.

    Layout: one line of JSON (UTF-8, ``\\n`` terminated) with keys
    format, version, dim, counts, spacing, origin, ghost, time, encoding,
    order; then ``prod(shape)`` float64 values, little-endian, C order,
    ghost cells included.
    """
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "dim": f.grid.dim,
        "counts": list(f.grid.counts),
        "spacing": f.grid.spacing,
        "origin": list(f.grid.origin),
        "ghost": f.grid.ghost,
        "time": f.time,
        "encoding": "<f8",
        "order": "C",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def load_snapshot(path) -> ScalarField:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("format") != SNAPSHOT_FORMAT:
            raise LevelFlowError(f"{path}: not a snapshot file")
        grid = Grid(
            dim=int(header["dim"]),
            counts=tuple(int(c) for c in header["counts"]),
            spacing=float(header["spacing"]),
            origin=tuple(float(o) for o in header["origin"]),
            ghost=int(header["ghost"]),
        )
        n = int(np.prod(grid.shape))
        payload = fh.read(n * 8)
        if len(payload) != n * 8:
            raise LevelFlowError(f"{path}: truncated payload")
        values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
    return ScalarField(grid=grid, values=values, time=float(header["time"]))

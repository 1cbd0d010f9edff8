"""Contour extraction of the zero set for export and plotting.

2-D snapshots go through marching squares, 3-D ones through marching
cubes (both via scikit-image).  The text formats are line-oriented:

    # levelflow-contours v1
    # time <t>
    # dim <2|3>
    v x y [z]          one vertex per line, physical coordinates
    p i0 i1 ...        polyline through vertex indices (2-D)
    f i0 i1 i2         triangle through vertex indices (3-D)

Boundary cell sets are written as one index tuple per line after the same
style of header.
"""

from __future__ import annotations

import numpy as np
from skimage import measure

from .grid import ScalarField


def zero_contours_2d(f: ScalarField) -> list[np.ndarray]:
    """Zero-level polylines in physical coordinates (possibly empty)."""
    paths = measure.find_contours(f.values, 0.0)
    origin = np.asarray(f.grid.origin)
    return [p * f.grid.spacing + origin for p in paths]


def zero_surface_3d(f: ScalarField):
    """(vertices, faces) of the zero isosurface in physical coordinates."""
    if f.values.min() >= 0 or f.values.max() <= 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=int)
    verts, faces, *_ = measure.marching_cubes(f.values, 0.0)
    return verts * f.grid.spacing + np.asarray(f.grid.origin), faces


def write_contour_file(path, f: ScalarField) -> None:
    """Write the zero set of a snapshot in the documented text format.

    An extinct snapshot produces a file with a valid header and no
    geometry.
    """
    lines = ["# levelflow-contours v1", f"# time {float(f.time)!r}", f"# dim {f.grid.dim}"]
    if f.grid.dim == 2:
        paths = zero_contours_2d(f)
        offset = 0
        vlines, plines = [], []
        for p in paths:
            for x, y in p:
                vlines.append(f"v {float(x)!r} {float(y)!r}")
            plines.append("p " + " ".join(str(offset + i) for i in range(len(p))))
            offset += len(p)
        lines += vlines + plines
    else:
        verts, faces = zero_surface_3d(f)
        for x, y, z in verts:
            lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
        for a, b, c in faces:
            lines.append(f"f {int(a)} {int(b)} {int(c)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_cell_set(path, mask: np.ndarray, time: float, label: str) -> None:
    lines = ["# levelflow-cells v1", f"# time {float(time)!r}", f"# label {label}"]
    for idx in np.argwhere(mask):
        lines.append(" ".join(str(int(i)) for i in idx))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_contour_file(path):
    """(time, dim, vertices array, list of index lists)."""
    time = None
    dim = None
    verts = []
    elems = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# time"):
                time = float(line.split()[-1])
            elif line.startswith("# dim"):
                dim = int(line.split()[-1])
            elif line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:]])
            elif line.startswith(("p ", "f ")):
                elems.append([int(x) for x in line.split()[1:]])
    return time, dim, np.asarray(verts), elems

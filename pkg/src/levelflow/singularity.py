"""Singular-event detection, containment-type classification, blow-up fitting.

A spacetime cell is flagged singular when the norm of the second
fundamental form reaches the grid-unresolvable scale at two grid levels
and grows under refinement.  Classification follows the containment test:
around a mean convex type point the evolving region strictly nests inward
in a backward parabolic neighborhood (outward for mean concave type).
Blow-up analysis rescales the track parabolically about the event and fits
the interface cloud against spheres and cylinders, with a convexity defect
and a backward-heat-kernel density completing the blow-up-type proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyRegion,
    LevelFlowError,
    NoInterface,
    NoRegularCells,
    TimeOutOfRange,
    WindowOutOfRange,
)
from .grid import Grid, ScalarField, interface_cells
from .operators import DEFAULT_STENCIL, abs_A_at, curvature_motion_at
from .evolution import SpacetimeTrack

THETA_SING = 0.5          # flag cells with |A| * h >= this
GROWTH_FACTOR = 1.4       # fine-level max |A| must exceed this times coarse


@dataclass
class BlowupResult:
    rescale_factors: list[float]
    fit_kind: str
    fit_residual: float            # h units of the rescale grid
    convexity_defect: float
    gaussian_density: float
    density_scales: list[float] = dc_field(default_factory=list)
    curvature_scale_product: float | None = None

    def to_dict(self) -> dict:
        return {
            "rescale_factors": self.rescale_factors,
            "fit_kind": self.fit_kind,
            "fit_residual_h": self.fit_residual,
            "convexity_defect": self.convexity_defect,
            "gaussian_density": self.gaussian_density,
            "density_scales": self.density_scales,
            "curvature_scale_product": self.curvature_scale_product,
        }


@dataclass
class SingularEvent:
    position: tuple[float, ...]
    time: float
    max_abs_A: float
    curvature_history: list[tuple[float, float]] = dc_field(default_factory=list)
    classification: str = "undetermined"
    blowup: BlowupResult | None = None

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "time": self.time,
            "max_abs_A": self.max_abs_A,
            "curvature_history": [[t, a] for t, a in self.curvature_history],
            "classification": self.classification,
            "blowup": self.blowup.to_dict() if self.blowup else None,
        }


def _flag_cells(track: SpacetimeTrack, theta: float):
    """Per-snapshot interface cells with |A|*h over threshold."""
    h = track.grid.spacing
    flagged = []  # (time, position ndarray, absA)
    for k in range(len(track)):
        f = track.field(k)
        band = interface_cells(f)
        if not band:
            continue
        idx = band.indices()
        ok = np.all((idx >= 1) & (idx < np.asarray(f.values.shape) - 1), axis=1)
        idx = idx[ok]
        if not len(idx):
            continue
        a = abs_A_at(f.values, idx, h)
        hot = a * h >= theta
        if hot.any():
            pts = idx[hot] * h + np.asarray(track.grid.origin)
            for p, av in zip(pts, a[hot]):
                flagged.append((float(track.times[k]), p, float(av)))
    return flagged


def _cluster(flagged, h: float, link_radius: float = 8.0):
    """Single-linkage clustering in the parabolic metric |dx|^2 ~ |dt|."""
    if not flagged:
        return []
    n = len(flagged)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    r_link = link_radius * h
    t_link = r_link * r_link
    times = np.array([f[0] for f in flagged])
    pts = np.array([f[1] for f in flagged])
    order = np.argsort(times)
    for ii in range(n):
        i = order[ii]
        for jj in range(ii + 1, n):
            j = order[jj]
            if times[j] - times[i] > t_link:
                break
            if np.sum((pts[j] - pts[i]) ** 2) <= r_link * r_link:
                union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    events = []
    for members in groups.values():
        members.sort(key=lambda m: times[m])
        peak_val = max(flagged[m][2] for m in members)
        # the blow-up point is where the curvature first saturates; later
        # entries of the same cluster are the regularizing aftermath
        # sweeping away from it (cone tips after a pinch)
        rep = next(m for m in members if flagged[m][2] >= 0.95 * peak_val)
        events.append(
            SingularEvent(
                position=tuple(float(x) for x in flagged[rep][1]),
                time=float(times[rep]),
                max_abs_A=float(peak_val),
            )
        )
    events.sort(key=lambda e: e.time)
    return events


def detect_singularities(
    tracks: list[SpacetimeTrack], theta: float = THETA_SING
) -> list[SingularEvent]:
    """Singular spacetime events confirmed at two grid levels.

    ``tracks`` holds the same scenario at a coarse and a fine grid level.
    Flagging uses the per-step hot-cell log of the evolution (the largest
    clipped motion term, which matches |A| for circles and cylinders and is
    within sqrt(n) of it in general); the blow-up of |A| happens between
    snapshots, so snapshot fields alone would miss it.  Tracks built
    outside the stepper fall back to snapshot flagging.  A fine-level
    cluster is kept when a coarse-level cluster sits nearby in the
    parabolic metric and the peak value grows by at least the refinement
    growth factor (a genuine blow-up doubles; a merely curved spot stays
    put).  Events carry the local curvature history on the fine level.
    """
    if len(tracks) < 2:
        raise LevelFlowError("detect_singularities needs tracks at two grid levels")
    coarse, fine = tracks[-2], tracks[-1]
    ev_c = _cluster(_flagged_points(coarse, theta), coarse.grid.spacing)
    ev_f = _cluster(_flagged_points(fine, theta), fine.grid.spacing)

    hc = coarse.grid.spacing
    confirmed = []
    for ef in ev_f:
        for ec in ev_c:
            dx = math.dist(ef.position, ec.position)
            dt = abs(ef.time - ec.time)
            if dx <= 10 * hc and dt <= (10 * hc) ** 2 and ef.max_abs_A >= GROWTH_FACTOR * ec.max_abs_A:
                confirmed.append(ef)
                break
    for ev in confirmed:
        hist = _history(fine, ev)
        hot = [
            (t, m)
            for t, m, p in fine.hot_log
            if t <= ev.time + 1e-12 and math.dist(p, ev.position) <= 10 * fine.grid.spacing
        ]
        ev.curvature_history = sorted(hist + hot)
    return confirmed


def _flagged_points(track: SpacetimeTrack, theta: float):
    h = track.grid.spacing
    if track.hot_log:
        return [
            (t, np.asarray(p), m)
            for t, m, p in track.hot_log
            if m * h >= theta
        ]
    return _flag_cells(track, theta)


def _history(track: SpacetimeTrack, event: SingularEvent, radius_h: float = 10.0):
    h = track.grid.spacing
    grid = track.grid
    out = []
    center = np.asarray(event.position)
    for k in range(len(track)):
        t = float(track.times[k])
        if t > event.time + 1e-12:
            break
        f = track.field(k)
        band = interface_cells(f)
        if not band:
            continue
        idx = band.indices()
        ok = np.all((idx >= 1) & (idx < np.asarray(f.values.shape) - 1), axis=1)
        idx = idx[ok]
        pts = idx * h + np.asarray(grid.origin)
        near = np.sum((pts - center) ** 2, axis=1) <= (radius_h * h) ** 2
        if not near.any():
            continue
        a = abs_A_at(f.values, idx[near], h)
        if a.size:
            out.append((t, float(a.max())))
    return out


# ---------------------------------------------------------------------------
# containment classification

def _region_mask(track: SpacetimeTrack, k: int) -> np.ndarray:
    return track.field(k).values >= 0


def mean_convex_type_check(
    track: SpacetimeTrack,
    event: SingularEvent,
    eps_list: list[float] | None = None,
    min_pairs: int = 10,
) -> str:
    """Containment-based classification of a singular event.

    For some ball radius eps, every ordered snapshot pair t1 < t2 in the
    backward window [t - eps^2, t] must satisfy
    region(t2) & ball  inside  region(t1) minus its boundary layer
    (with one cell of tolerance) for mean convex type, or the reversed
    containment for mean concave type.
    """
    grid = track.grid
    h = grid.spacing
    if eps_list is None:
        eps_list = [8 * h, 12 * h, 16 * h]
    eps_list = [e for e in eps_list if e >= 4 * h]
    if not eps_list:
        raise LevelFlowError("eps_list entries must be at least 4h")

    t0 = min(event.time, float(track.times[-1]))
    if t0 < float(track.times[0]) - 1e-12:
        raise TimeOutOfRange(f"event time {event.time} before track start")

    struct = ndimage.generate_binary_structure(grid.dim, 1)
    center = np.asarray(event.position)
    coords = grid.meshgrid()
    dist2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))

    verdicts = []
    for eps in eps_list:
        ks = [k for k in range(len(track)) if t0 - eps * eps - 1e-12 <= track.times[k] <= t0 + 1e-12]
        if len(ks) < 2:
            verdicts.append(("undetermined", eps))
            continue
        ball = dist2 <= eps * eps
        pairs = []
        for a in range(len(ks)):
            for b in range(a + 1, len(ks)):
                pairs.append((ks[a], ks[b]))
        if len(pairs) > 4 * min_pairs:
            sel = np.linspace(0, len(pairs) - 1, 4 * min_pairs).astype(int)
            pairs = [pairs[i] for i in sel]
        convex_ok = True
        concave_ok = True
        for k1, k2 in pairs:
            r1 = _region_mask(track, k1)
            r2 = _region_mask(track, k2)
            # U(t) minus its interface layer, dilated once for tolerance
            interior1 = ndimage.binary_erosion(r1, structure=struct, border_value=1)
            target1 = ndimage.binary_dilation(interior1, structure=struct)
            if np.any((r2 & ball) & ~target1):
                convex_ok = False
            interior2 = ndimage.binary_erosion(r2, structure=struct, border_value=1)
            target2 = ndimage.binary_dilation(interior2, structure=struct)
            if np.any((r1 & ball) & ~target2):
                concave_ok = False
            if not convex_ok and not concave_ok:
                break
        if convex_ok and not concave_ok:
            verdicts.append(("mean_convex_type", eps))
        elif concave_ok and not convex_ok:
            verdicts.append(("mean_concave_type", eps))
        elif convex_ok and concave_ok:
            verdicts.append(("undetermined", eps))
        else:
            verdicts.append(("neither", eps))

    for label in ("mean_convex_type", "mean_concave_type"):
        if any(v == label for v, _ in verdicts):
            return label
    if all(v == "undetermined" for v, _ in verdicts):
        return "undetermined"
    return "neither"


# ---------------------------------------------------------------------------
# parabolic rescaling

def parabolic_rescale(
    track: SpacetimeTrack,
    x0,
    t0: float,
    Q: float,
    times=(-1.0, -0.5, -0.25),
    rescale_grid: Grid | None = None,
    rescale_counts: int = 64,
    rescale_radius: float = 3.0,
) -> SpacetimeTrack:
    """Track of Q * u(x0 + y/Q, t0 + s/Q^2) at the requested rescaled times.

    The result lives on a fixed rescale grid and is distance-like again
    because of the factor Q.  Raises WindowOutOfRange when a source time
    falls outside the track.
    """
    if Q <= 0:
        raise LevelFlowError("rescale factor must be positive")
    grid = track.grid
    if rescale_grid is None:
        rescale_grid = Grid.centered(2 * rescale_radius, rescale_counts, dim=grid.dim, ghost=2)
    x0 = np.asarray(x0, dtype=float)

    out = SpacetimeTrack(rescale_grid, shape_kind=track.shape_kind)
    coords = rescale_grid.meshgrid()
    pts = np.stack([c.ravel() for c in coords], axis=1)
    src_pts = x0 + pts / Q
    for s in sorted(times):
        t_src = t0 + s / (Q * Q)
        if t_src < track.times[0] - 1e-12 or t_src > track.times[-1] + 1e-12:
            raise WindowOutOfRange(
                f"rescaled time {s} maps to t={t_src:.6g} outside the track range"
            )
        u = track.values_at(float(np.clip(t_src, track.times[0], track.times[-1])))
        f = ScalarField(grid, u, t_src)
        vals = f.sample(src_pts) * Q
        out.append(ScalarField(rescale_grid, vals.reshape(rescale_grid.shape), s))
    return out


# ---------------------------------------------------------------------------
# shrinker fitting

def _interface_points(field: ScalarField) -> np.ndarray:
    """Subcell zero-crossing points along grid edges."""
    v = field.values
    g = field.grid
    pts = []
    for axis in range(v.ndim):
        lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(v.ndim))
        hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(v.ndim))
        a, b = v[lo], v[hi]
        cross = (a * b < 0) | ((a == 0) & (b != 0))
        idx = np.argwhere(cross)
        if not len(idx):
            continue
        av = a[tuple(idx.T)]
        bv = b[tuple(idx.T)]
        theta = av / (av - bv)
        p = idx.astype(float)
        p[:, axis] += theta
        pts.append(p * g.spacing + np.asarray(g.origin))
    if not pts:
        raise NoInterface("field has no zero crossings")
    return np.concatenate(pts, axis=0)


def _fit_sphere(pts: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Algebraic least-squares sphere fit; returns (rms residual, center, radius)."""
    A = np.column_stack([2 * pts, np.ones(len(pts))])
    b = np.sum(pts * pts, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c = sol[:-1]
    r2 = sol[-1] + float(c @ c)
    r = math.sqrt(max(r2, 0.0))
    res = np.linalg.norm(pts - c, axis=1) - r
    return float(np.sqrt(np.mean(res * res))), c, r


def _fit_cylinder_axis(pts: np.ndarray, direction: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Circle fit of the point cloud projected orthogonally to ``direction``."""
    d = direction / np.linalg.norm(direction)
    if pts.shape[1] == 2:
        # "cylinder" in the plane: a pair of lines at distance r from an axis line
        t = pts @ d
        n = np.array([-d[1], d[0]])
        s = pts @ n
        # |s - s0| = r  =>  fit s0 as midpoint of the two clusters, r as half-gap
        s0 = 0.5 * (s.max() + s.min())
        r = float(np.mean(np.abs(s - s0)))
        res = np.abs(np.abs(s - s0) - r)
        return float(np.sqrt(np.mean(res * res))), np.array([s0]), r
    # orthonormal basis of the plane normal to d
    e1 = np.cross(d, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(d, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    proj = np.column_stack([pts @ e1, pts @ e2])
    return _fit_sphere(proj)


def _direction_grid(dim: int) -> np.ndarray:
    if dim == 2:
        ang = np.linspace(0, math.pi, 90, endpoint=False)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    # subdivided icosahedron, 162 vertices
    phi = (1 + math.sqrt(5)) / 2
    verts = []
    for a, b in ((1, phi), (-1, phi), (1, -phi), (-1, -phi)):
        verts += [(0, a, b), (a, b, 0), (b, 0, a)]
    verts = np.array(verts, dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = _icosa_faces(verts)
    for _ in range(2):
        verts, faces = _subdivide(verts, faces)
    return verts


def _icosa_faces(verts):
    faces = []
    n = len(verts)
    d2 = np.sum((verts[:, None, :] - verts[None, :, :]) ** 2, axis=2)
    edge = d2 < 1.2
    for i in range(n):
        for j in range(i + 1, n):
            if not edge[i, j]:
                continue
            for k in range(j + 1, n):
                if edge[i, k] and edge[j, k]:
                    faces.append((i, j, k))
    return faces


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    index = {v: i for i, v in enumerate(verts)}

    def midpoint(a, b):
        m = tuple((np.asarray(verts[a]) + np.asarray(verts[b])) / 2)
        m = tuple(np.asarray(m) / np.linalg.norm(m))
        if m not in index:
            index[m] = len(verts)
            verts.append(m)
        return index[m]

    out = []
    for i, j, k in faces:
        ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
        out += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
    return np.array(verts), out


def _golden_refine(fun, x0, span, iters=24):
    gr = (math.sqrt(5) - 1) / 2
    a, b = x0 - span, x0 + span
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = fun(d)
    return (a + b) / 2


def shrinker_fit(field: ScalarField, theta_fit: float = 0.75):
    """Least-squares classification of the interface cloud.

    Fits a sphere and a cylinder (axis searched over a deterministic
    direction grid plus golden-section refinement) and returns
    (fit_kind, residual in h units, parameters).  ``fit_kind`` is "other"
    when the best residual exceeds ``theta_fit`` grid cells.
    """
    pts = _interface_points(field)
    h = field.grid.spacing
    res_s, center, radius = _fit_sphere(pts)

    dirs = _direction_grid(field.grid.dim)
    res_by_dir = [(_fit_cylinder_axis(pts, d)[0], tuple(d)) for d in dirs]
    best_res, best_d = min(res_by_dir)
    best_d = np.asarray(best_d)
    if field.grid.dim == 2:
        ang0 = math.atan2(best_d[1], best_d[0])
        ang = _golden_refine(
            lambda a: _fit_cylinder_axis(pts, np.array([math.cos(a), math.sin(a)]))[0],
            ang0,
            math.pi / 90,
        )
        best_d = np.array([math.cos(ang), math.sin(ang)])
    else:
        theta0 = math.acos(np.clip(best_d[2], -1, 1))
        phi0 = math.atan2(best_d[1], best_d[0])

        def from_angles(th, ph):
            return np.array(
                [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
            )

        span = 0.25
        th, ph = theta0, phi0
        for _ in range(2):
            th = _golden_refine(lambda a: _fit_cylinder_axis(pts, from_angles(a, ph))[0], th, span)
            ph = _golden_refine(lambda a: _fit_cylinder_axis(pts, from_angles(th, a))[0], ph, span)
            span /= 4
        best_d = from_angles(th, ph)
    res_c, axis_pt, radius_c = _fit_cylinder_axis(pts, best_d)

    if res_s <= res_c:
        kind, res, params = "sphere", res_s, {"center": center.tolist(), "radius": radius}
    else:
        kind, res, params = (
            "cylinder",
            res_c,
            {"axis": best_d.tolist(), "radius": radius_c},
        )
    if res > theta_fit * h:
        kind = "other"
    return kind, res / h, params


def convexity_defect(region: np.ndarray, samples: int = 10_000, seed: int = 0) -> float:
    """Fraction of midpoints of random cell pairs falling outside the region."""
    cells = np.argwhere(region)
    if not len(cells):
        raise EmptyRegion("convexity defect of an empty region")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(cells), samples)
    j = rng.integers(0, len(cells), samples)
    mid = np.rint((cells[i] + cells[j]) / 2).astype(int)
    inside = region[tuple(mid.T)]
    return float(1.0 - np.count_nonzero(inside) / samples)


# ---------------------------------------------------------------------------
# Gaussian density

def _smoothed_delta(u: np.ndarray, eps: float) -> np.ndarray:
    out = np.zeros_like(u)
    m = np.abs(u) < eps
    out[m] = (1 + np.cos(math.pi * u[m] / eps)) / (2 * eps)
    return out


def gaussian_density(
    track: SpacetimeTrack,
    x0,
    t0: float,
    r_scales: list[float] | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Backward-heat-kernel weighted area of the interface about (x0, t0).

    For each scale r the interface at time t0 - r^2 is integrated against
    (4 pi r^2)^(-n/2) exp(-|x-x0|^2 / (4 r^2)) using the co-area smoothed
    delta of width 1.5h.  Returns the smallest-scale value and the whole
    (r, value) table; for a self-similar flow the table is constant in r.
    """
    grid = track.grid
    h = grid.spacing
    if r_scales is None:
        r_scales = [6 * h, 9 * h, 12 * h]
    x0 = np.asarray(x0, dtype=float)
    n = grid.dim - 1

    table = []
    for r in sorted(r_scales, reverse=True):
        t_src = t0 - r * r
        if t_src < track.times[0] - 1e-12 or t_src > track.times[-1] + 1e-12:
            raise WindowOutOfRange(f"density scale r={r:g} needs t={t_src:.6g} outside track")
        u = track.values_at(float(np.clip(t_src, track.times[0], track.times[-1])))
        grads = np.gradient(u, h)
        if not isinstance(grads, (list, tuple)):
            grads = [grads]
        gmag = np.sqrt(sum(g * g for g in grads))
        delta = _smoothed_delta(u, 1.5 * h)
        coords = grid.meshgrid()
        dist2 = sum((c - x) ** 2 for c, x in zip(coords, x0))
        kernel = (4 * math.pi * r * r) ** (-n / 2) * np.exp(-dist2 / (4 * r * r))
        val = float(np.sum(delta * gmag * kernel) * h**grid.dim)
        table.append((float(r), val))
    table.sort(key=lambda t: t[0])
    return table[0][1], table


# ---------------------------------------------------------------------------
# curvature scale product

def curvature_scale_product(
    track: SpacetimeTrack,
    x0,
    t0: float,
    window_radius: float,
    rho_max: float | None = None,
    max_samples: int = 200,
    seed: int = 0,
) -> float:
    """Minimum of H * R over sampled regular interface cells near (x0, t0).

    H is the mean curvature toward the region {u >= 0}; R is the largest
    rho <= rho_max such that |A| <= 1/rho over the backward parabolic
    cylinder B(x, rho) x [t - rho^2, t] (discrete scan over snapshots).
    """
    grid = track.grid
    h = grid.spacing
    if rho_max is None:
        rho_max = window_radius
    x0 = np.asarray(x0, dtype=float)

    ks = [
        k
        for k in range(len(track))
        if t0 - window_radius**2 - 1e-12 <= track.times[k] <= t0 + 1e-12
    ]
    if not ks:
        raise TimeOutOfRange("window contains no snapshots")

    # cache per-snapshot interface data
    cache = {}
    for k in ks:
        f = track.field(k)
        band = interface_cells(f)
        if not band:
            continue
        idx = band.indices()
        ok = np.all((idx >= 1) & (idx < np.asarray(f.values.shape) - 1), axis=1)
        idx = idx[ok]
        pts = idx * h + np.asarray(grid.origin)
        a = abs_A_at(f.values, idx, h)
        motion, _ = curvature_motion_at(f.values, idx, h, DEFAULT_STENCIL, clip=1e300)
        grads = np.zeros(len(idx))
        for axis in range(grid.dim):
            up = idx.copy()
            dn = idx.copy()
            up[:, axis] += 1
            dn[:, axis] -= 1
            grads += ((f.values[tuple(up.T)] - f.values[tuple(dn.T)]) / (2 * h)) ** 2
        grads = np.sqrt(grads)
        cache[k] = (pts, a, motion, grads)
    if not cache:
        raise NoRegularCells("no interface cells in the window")

    k_last = max(cache)
    pts, a, motion, grads = cache[k_last]
    near = np.sum((pts - x0) ** 2, axis=1) <= window_radius**2
    regular = near & (grads > 1e-6) & (a * h < THETA_SING)
    cand = np.nonzero(regular)[0]
    if not len(cand):
        raise NoRegularCells("no regular interface cells in the window")
    rng = np.random.default_rng(seed)
    if len(cand) > max_samples:
        cand = rng.choice(cand, max_samples, replace=False)

    t_last = float(track.times[k_last])
    products = []
    for ci in cand:
        x = pts[ci]
        # H toward the region {u >= 0}
        H = -motion[ci] / grads[ci]
        if H <= 0:
            products.append(0.0)
            continue
        R = 0.0
        rho_steps = np.arange(2, max(3, int(rho_max / h) + 1)) * h
        for rho in rho_steps:
            ok = True
            for k in cache:
                if track.times[k] < t_last - rho * rho - 1e-12:
                    continue
                pk, ak, _, _ = cache[k]
                inside = np.sum((pk - x) ** 2, axis=1) <= rho * rho
                if inside.any() and ak[inside].max() > 1.0 / rho:
                    ok = False
                    break
            if ok:
                R = float(rho)
            else:
                break
        products.append(H * R)
    return float(min(products))

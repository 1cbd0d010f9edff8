"""Weak-set-flow certification of computed tracks.

A weak set flow must stay disjoint from every smooth compact comparison
flow it starts disjoint from.  The checks here test exactly that against
closed-form shrinking spheres and cylinders (avoidance), verify the sign
of the evolution residual on level sets (superlevel sets may only move
inward faster than mean curvature, sublevel sets outward), test avoidance
for exponentially rescaled superlevel sets, sweep the level families of a
proper function for discrepancy, and probe the countable-exceptional-times
property of the outer flow.

Comparison flows are always evaluated in closed form, so a failed check
points at the computed track, not at a second discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    EmptyLevel,
    LevelFlowError,
    LevelNotPresent,
    NotDisjointAtStart,
    PastExtinction,
)
from .evolution import (
    EvolveConfig,
    SpacetimeTrack,
    discrepancy_time,
    evolve,
    flow_pair,
    hausdorff_distance,
    mask_boundary,
)
from .grid import Grid, ScalarField
from .operators import DEFAULT_STENCIL, curvature_motion_at
from .shapes import ShapeSpec, level_family
from .singularity import _interface_points


@dataclass(frozen=True)
class SmoothTestFlow:
    """Closed-form shrinking sphere or cylinder comparison flow.

    ``k`` counts the shrinking dimensions (the sphere factor), so the
    radius is sqrt(r0^2 - 2 k t) with extinction at r0^2 / (2k); k = 0 is a
    static comparison surface.  Cylinders shrink around the ``axis`` line
    through ``center``.
    """

    kind: str
    center: tuple[float, ...]
    r0: float
    k: int
    axis: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("shrinking_sphere", "shrinking_cylinder"):
            raise LevelFlowError(f"unknown test flow kind {self.kind!r}")
        if self.r0 <= 0:
            raise LevelFlowError("r0 must be positive")
        if self.k < 0:
            raise LevelFlowError("k must be nonnegative")
        if self.kind == "shrinking_cylinder" and self.axis is None:
            raise LevelFlowError("cylinder flow needs an axis")

    @property
    def extinction(self) -> float:
        return math.inf if self.k == 0 else self.r0**2 / (2 * self.k)

    def surface_distance(self, t: float, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the flow surface at time t."""
        r = analytic_radius(self, t)
        c = np.asarray(self.center)
        if self.kind == "shrinking_sphere":
            return np.abs(np.linalg.norm(points - c, axis=1) - r)
        d = np.asarray(self.axis, dtype=float)
        d = d / np.linalg.norm(d)
        rel = points - c
        along = rel @ d
        radial = rel - np.outer(along, d)
        return np.abs(np.linalg.norm(radial, axis=1) - r)


def analytic_radius(flow: SmoothTestFlow, t: float) -> float:
    """sqrt(r0^2 - 2 k t); raises PastExtinction at or beyond the focal time."""
    if t >= flow.extinction:
        raise PastExtinction(f"flow extinct at t={flow.extinction:g}")
    return math.sqrt(flow.r0**2 - 2 * flow.k * t)


@dataclass
class CertificateResult:
    name: str
    verdict: str                 # "PASS" or "FAIL"
    margin: float                # worst value minus what the tolerance allowed
    tolerance: float
    detail: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "margin": self.margin,
            "tolerance": self.tolerance,
            **self.detail,
        }


def _separation_series(track: SpacetimeTrack, flow: SmoothTestFlow, level_fn) -> list[tuple[float, float]]:
    """Min distance between the {u = level(t)} interface and the flow surface."""
    series = []
    for k in range(len(track)):
        t = float(track.times[k])
        if t >= flow.extinction:
            break
        f = track.field(k)
        c = level_fn(t)
        shifted = f if c == 0.0 else f.with_values(f.values - c)
        try:
            pts = _interface_points(shifted)
        except LevelFlowError:
            continue
        d = float(flow.surface_distance(t, pts).min())
        series.append((t, d))
    return series


def avoidance_check(
    track: SpacetimeTrack, flow: SmoothTestFlow, level: float = 0.0
) -> CertificateResult:
    """PASS when the separation from the analytic flow never drops 2h below start.

    Raises NotDisjointAtStart when the surfaces already touch at the first
    snapshot (separation below h/2 is indistinguishable from contact).
    """
    h = track.grid.spacing
    series = _separation_series(track, flow, lambda t: level)
    if not series:
        raise LevelFlowError("no comparable snapshots")
    d0 = series[0][1]
    if d0 <= 0.5 * h:
        raise NotDisjointAtStart(f"separation {d0:g} at start")
    worst = min(d - d0 for _, d in series)
    verdict = "PASS" if worst >= -2 * h else "FAIL"
    return CertificateResult(
        name=f"avoidance[{flow.kind},r0={flow.r0:g},k={flow.k}]",
        verdict=verdict,
        margin=worst + 2 * h,
        tolerance=-2 * h,
        detail={"start_separation": d0, "min_drift": worst, "level": level},
    )


def scaled_levelset_avoidance(
    track: SpacetimeTrack, alpha: float, c: float, flow: SmoothTestFlow
) -> CertificateResult:
    """Avoidance of the superlevel set {exp(-alpha t) u >= c} against the flow.

    With alpha = 0 this is bit-identical to ``avoidance_check`` on {u >= c}.
    """
    if c <= 0:
        raise LevelFlowError("scaled level c must be positive")
    h = track.grid.spacing
    series = _separation_series(track, flow, lambda t: c * math.exp(alpha * t))
    if not series:
        raise LevelFlowError("no comparable snapshots (scaled level may be absent)")
    d0 = series[0][1]
    if d0 <= 0.5 * h:
        raise NotDisjointAtStart(f"separation {d0:g} at start")
    worst = min(d - d0 for _, d in series)
    verdict = "PASS" if worst >= -2 * h else "FAIL"
    return CertificateResult(
        name=f"scaled_avoidance[alpha={alpha:g},c={c:g},{flow.kind}]",
        verdict=verdict,
        margin=worst + 2 * h,
        tolerance=-2 * h,
        detail={"start_separation": d0, "min_drift": worst, "alpha": alpha, "c": c},
    )


def residual_certificate(
    track: SpacetimeTrack,
    c: float = 0.0,
    side: str = "super",
    tol_factor: float = 2.0,
) -> CertificateResult:
    """Sign certificate for the evolution residual on the level {u = c}.

    The superlevel flow {u >= c} is a weak set flow exactly when the
    residual u_t - |grad u| div(grad u/|grad u|) is nonpositive on the
    level (nonnegative for the sublevel flow), so the certificate reports
    the worst forbidden-sign value over cells straddling the level at
    every snapshot pair; PASS means it stays within the O(h)
    discretization allowance tol_factor * h.

    Snapshot pairs where the level is not resolvable in time or space are
    reported in the series but excluded from the verdict: fewer than 4*dim
    straddle cells, or a sweep of more than 2h per snapshot interval,
    cannot be evaluated by finite differences (the terminal collapse of a
    level between two snapshots is the typical case).  The level must lie
    inside the evolved band (|c| < band of the run), since the field is
    frozen beyond it.
    """
    if side not in ("super", "sub"):
        raise LevelFlowError("side must be 'super' or 'sub'")
    if len(track) < 2:
        raise LevelFlowError("need at least two snapshots")
    h = track.grid.spacing
    min_cells = 4 * track.grid.dim
    worst = -math.inf
    seen = False
    per_snapshot = []
    for k in range(1, len(track)):
        prev = track.field(k - 1)
        cur = track.field(k)
        dt = float(cur.time - prev.time)
        mid = 0.5 * (prev.values + cur.values)
        v = mid - c
        straddle = np.zeros(v.shape, dtype=bool)
        for axis in range(v.ndim):
            lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(v.ndim))
            hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(v.ndim))
            cross = v[lo] * v[hi] < 0
            straddle[lo] |= cross
            straddle[hi] |= cross
        for axis in range(v.ndim):
            sl0 = tuple(slice(0, 1) if a == axis else slice(None) for a in range(v.ndim))
            sl1 = tuple(slice(-1, None) if a == axis else slice(None) for a in range(v.ndim))
            straddle[sl0] = False
            straddle[sl1] = False
        idx = np.argwhere(straddle)
        if not len(idx):
            per_snapshot.append((float(cur.time), None))
            continue
        # centered differencing: u_t over the interval against the
        # curvature of the midpoint field, second order in the interval
        motion, _ = curvature_motion_at(mid, idx, h, DEFAULT_STENCIL, clip=1e300)
        cols = tuple(idx[:, a] for a in range(v.ndim))
        du = cur.values[cols] - prev.values[cols]
        residual = du / dt - motion
        bad = residual.max() if side == "super" else (-residual).max()
        per_snapshot.append((float(cur.time), float(bad)))
        # resolvable: enough straddle cells, a sweep under one cell per
        # interval, and a rate well below the clip speed.  A faster sweep
        # means the snapshot differencing can no longer track the curvature
        # growth within the interval (the error scales like dt * kappa^3),
        # which is a property of the sampling, not of the flow.
        du_max = float(np.abs(du).max())
        if len(idx) >= min_cells and du_max <= 1.0 * h and du_max / dt <= 0.25 / h:
            seen = True
            worst = max(worst, float(bad))
    if not seen:
        raise LevelNotPresent(f"level {c:g} never attained (resolved) on the track")
    tol = tol_factor * h
    verdict = "PASS" if worst <= tol else "FAIL"
    return CertificateResult(
        name=f"residual[{side},c={c:g}]",
        verdict=verdict,
        margin=tol - worst,
        tolerance=tol,
        detail={"max_violation": worst, "series": per_snapshot},
    )


def level_sweep(
    spec: ShapeSpec,
    s_samples,
    t_end: float,
    grid: Grid,
    cfg: EvolveConfig | None = None,
) -> list[dict]:
    """Evolve each level region {phi <= s} and estimate its discrepancy time.

    Returns one row per sample: {"s", "t_disc", "status"}; empty levels are
    recorded and skipped.  Coinciding inner and outer flows for all but an
    O(h) set of levels is the expected generic picture.
    """
    if spec.kind != "sublevel_of_function":
        raise LevelFlowError("level_sweep requires a sublevel_of_function shape")
    cfg = cfg or EvolveConfig()
    rows = []
    for s in s_samples:
        sub = level_family(spec, float(s))
        try:
            pair = flow_pair(sub, t_end, cfg, grid=grid)
        except EmptyLevel:
            rows.append({"s": float(s), "t_disc": None, "status": "empty_level"})
            continue
        result = discrepancy_time([pair])
        rows.append({"s": float(s), "t_disc": result.estimate, "status": "ok"})
    return rows


def countable_times_probe(
    track: SpacetimeTrack, t_samples, threshold_h: float = 2.0
) -> dict:
    """Exceptional-time probe for the outer flow.

    The outer flow differs from the boundary of the region slice exactly
    at sudden-vanishing times: a region component disappearing or the
    topology changing between snapshots leaves boundary points with no
    nearby region boundary.  Each sample compares the last snapshot
    strictly before t against the nearest one and flags vanished
    components and topology changes; the raw boundary Hausdorff distance
    (in h units) is reported alongside.  Generic samples are unflagged;
    extinction and pinch-clearing instants are the honest exceptions.
    """
    from scipy import ndimage

    h = track.grid.spacing
    struct = ndimage.generate_binary_structure(track.grid.dim, 1)
    rows = []
    flagged_intervals: set[int] = set()
    for t in t_samples:
        t = float(t)
        k_near = track.nearest_index(t)
        k_left = track.left_index(t)
        if k_left == k_near:
            k_left = max(k_near - 1, 0)
        left_region = track.field(k_left).values >= 0
        now_region = track.field(k_near).values >= 0
        # sub-stencil specks (sign dust around a topology change) are not
        # components of the flow
        min_cells = 2 ** track.grid.dim
        labels_l, n_l = ndimage.label(left_region, structure=struct)
        sizes_l = ndimage.sum_labels(np.ones_like(labels_l), labels_l, range(1, n_l + 1))
        comps_l = [c + 1 for c in range(n_l) if sizes_l[c] >= min_cells]
        labels_n, n_n = ndimage.label(now_region, structure=struct)
        sizes_n = ndimage.sum_labels(np.ones_like(labels_n), labels_n, range(1, n_n + 1))
        comps_n = [c + 1 for c in range(n_n) if sizes_n[c] >= min_cells]
        vanished = any(
            not np.any(now_region & (labels_l == comp)) for comp in comps_l
        )
        exceeds = vanished or (len(comps_l) != len(comps_n))
        # one exceptional snapshot interval is one exceptional time, no
        # matter how many samples land inside it
        if exceeds:
            if k_near in flagged_intervals:
                exceeds = False
            else:
                flagged_intervals.add(k_near)
        d = hausdorff_distance(
            mask_boundary(left_region), mask_boundary(now_region), h
        )
        d_h = d / h if np.isfinite(d) else math.inf
        rows.append({"t": t, "distance_h": d_h, "exceeds": bool(exceeds)})
    frac = sum(r["exceeds"] for r in rows) / max(len(rows), 1)
    return {"rows": rows, "exceed_fraction": frac, "threshold_h": threshold_h}

import math

import numpy as np
import pytest

from levelflow import (
    EvolveConfig,
    Grid,
    ScalarField,
    ShapeSpec,
    SmoothTestFlow,
    analytic_radius,
    avoidance_check,
    countable_times_probe,
    level_sweep,
    residual_certificate,
    scaled_levelset_avoidance,
)
from levelflow.errors import LevelNotPresent, NotDisjointAtStart, PastExtinction
from levelflow.evolution import SpacetimeTrack
from tests.test_singularity import exact_circle_track


def test_analytic_radius():
    f = SmoothTestFlow("shrinking_sphere", (0.0, 0.0, 0.0), 0.8, 2)
    assert abs(analytic_radius(f, 0.1) - math.sqrt(0.24)) < 1e-12
    assert analytic_radius(f, 0.0) == 0.8
    c = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.8, 1)
    assert analytic_radius(c, c.extinction - 1e-9) < 2e-4
    with pytest.raises(PastExtinction):
        analytic_radius(c, c.extinction)


def test_avoidance_concentric_circles(circle_track_128):
    # analytic circle inside the computed one: separation grows since the
    # smaller circle shrinks faster
    inner = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.2, 1)
    res = avoidance_check(circle_track_128, inner)
    assert res.passed
    assert res.detail["min_drift"] > -1e-9
    outer = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.8, 1)
    assert avoidance_check(circle_track_128, outer).passed
    offset = SmoothTestFlow("shrinking_sphere", (0.62, 0.0), 0.1, 1)
    assert avoidance_check(circle_track_128, offset).passed


def test_avoidance_not_disjoint(circle_track_128):
    touching = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.5, 1)
    with pytest.raises(NotDisjointAtStart):
        avoidance_check(circle_track_128, touching)


def test_residual_certificate_exact_field_passes_and_refines():
    # parabolic refinement: the snapshot interval refines with h^2 like the
    # stepper, otherwise the interval-lag term dt * kappa^3 never vanishes;
    # r0 = 0.8 keeps the straddle-cell offset term h * kappa^2 below the
    # 2h allowance
    worst = []
    for n in (64, 128, 256):
        g = Grid.centered(2.0, n, dim=2)
        n_snap = max(6, int(round(0.02 / (4 * g.spacing**2))) + 1)
        track = exact_circle_track(g, r0=0.8, n_snapshots=n_snap, t_end=0.02)
        res = residual_certificate(track, 0.0, "super", tol_factor=2.0)
        assert res.passed, (n, res.detail["max_violation"])
        res_sub = residual_certificate(track, 0.0, "sub", tol_factor=2.0)
        assert res_sub.passed
        worst.append(max(res.detail["max_violation"], res_sub.detail["max_violation"]))
    # order >= 1 in h across three dyadic refinements
    assert worst[1] < 0.6 * worst[0]
    assert worst[2] < 0.6 * worst[1]


def test_residual_certificate_adversarial_control(grid128):
    # u = x - t^2 translates with speed 2t and zero curvature: the sublevel
    # flow {u <= 0} overruns comparison flows, the superlevel one does not
    X, _ = grid128.meshgrid()
    track = SpacetimeTrack(grid128)
    for t in np.linspace(0.9, 1.0, 21):
        track.append(ScalarField(grid128, X - t * t, float(t)))
    res_sub = residual_certificate(track, 0.0, "sub")
    assert not res_sub.passed
    assert res_sub.detail["max_violation"] > 1.0
    res_super = residual_certificate(track, 0.0, "super")
    assert res_super.passed


def test_residual_level_not_present(circle_track_128):
    with pytest.raises(LevelNotPresent):
        residual_certificate(circle_track_128, 10.0, "super")


def test_scaled_avoidance_alpha_zero_bit_identical(circle_track_128):
    flow = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.8, 1)
    a = scaled_levelset_avoidance(circle_track_128, 0.0, 0.05, flow)
    b = avoidance_check(circle_track_128, flow, level=0.05)
    assert a.detail["min_drift"] == b.detail["min_drift"]
    assert a.detail["start_separation"] == b.detail["start_separation"]
    assert a.verdict == b.verdict == "PASS"


def test_scaled_avoidance_positive_alpha(circle_track_128):
    flow = SmoothTestFlow("shrinking_sphere", (0.0, 0.0), 0.85, 1)
    res = scaled_levelset_avoidance(circle_track_128, 1.0, 0.05, flow)
    assert res.passed


def test_level_sweep_norm_has_no_discrepancies():
    g = Grid.centered(2.0, 64, dim=2)
    spec = ShapeSpec.sublevel("hypot(x,y)")
    rows = level_sweep(
        spec,
        np.linspace(0.3, 0.8, 8),
        0.02,
        g,
        EvolveConfig(snapshot_every=10, compute_series=False),
    )
    assert all(r["status"] == "ok" for r in rows)
    assert all(r["t_disc"] is None for r in rows)


def test_level_sweep_empty_level():
    g = Grid.centered(2.0, 64, dim=2)
    spec = ShapeSpec.sublevel("hypot(x,y)")
    rows = level_sweep(spec, [-0.2], 0.01, g, EvolveConfig(compute_series=False))
    assert rows[0]["status"] == "empty_level"


def test_countable_times_probe_circle(circle_track_128):
    ts = np.linspace(0.002, float(circle_track_128.times[-1]) - 1e-6, 50)
    out = countable_times_probe(circle_track_128, ts)
    # at most the extinction-time sample is exceptional
    assert out["exceed_fraction"] <= 1 / 50 + 1e-9

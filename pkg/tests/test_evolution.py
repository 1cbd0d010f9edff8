import numpy as np
import pytest

from levelflow import (
    EvolveConfig,
    Grid,
    ScalarField,
    ShapeSpec,
    arrival_time,
    boundary_slice,
    complement,
    discrepancy_time,
    evolve,
    fattening_time,
    flow_pair,
    left_limit_check,
    region_slice,
    signed_distance,
    step,
)
from levelflow.errors import CFLViolation, NonMonotoneSweep, NotApplicable, TimeOutOfRange
from levelflow.evolution import SpacetimeTrack
from tests.conftest import circle_sdf


def crossing_radius(field):
    g = field.grid
    v = field.values
    c = g.index_near((0.0, 0.0))
    row = v[c[0], :]
    x = g.axis_coords(1)
    j = c[1]
    while j < len(row) - 1 and row[j + 1] > 0:
        j += 1
    if row[j] <= 0:
        return np.nan
    th = row[j] / (row[j] - row[j + 1])
    return x[j] + th * (x[j + 1] - x[j])


def test_step_circle_radius_decrease(grid128):
    f = circle_sdf(grid128, r0=0.8)
    h = grid128.spacing
    dt = 0.2 * h * h
    out = step(f, dt)
    dr = crossing_radius(out) - crossing_radius(f)
    assert abs(dr + dt / 0.8) < 0.5 * (h * h + dt)


def test_step_plane_static(grid64):
    X, _ = grid64.meshgrid()
    f = ScalarField(grid64, X - 0.1)
    out = step(f, 0.2 * grid64.spacing ** 2)
    band = np.abs(f.values) < 5 * grid64.spacing
    assert np.abs(out.values - f.values)[band].max() < 1e-12


def test_step_cfl_violation(grid64):
    f = circle_sdf(grid64)
    with pytest.raises(CFLViolation):
        step(f, grid64.spacing ** 2)


def test_sphere_radius_at_t(grid64):
    g = Grid.centered(2.0, 64, dim=3)
    track = evolve(ShapeSpec.ball(0.8, (0, 0, 0)), 0.1, EvolveConfig(snapshot_every=100), grid=g)
    f = track.field(-1)
    # measure the crossing along +x
    c = g.index_near((0, 0, 0))
    row = f.values[c[0], c[1], :]
    x = g.axis_coords(2)
    j = c[2]
    while j < len(row) - 1 and row[j + 1] > 0:
        j += 1
    th = row[j] / (row[j] - row[j + 1])
    r = x[j] + th * (x[j + 1] - x[j])
    expect = np.sqrt(0.64 - 4 * track.times[-1])
    assert abs(r - expect) / expect < 0.02


def test_circle_extinction(circle_track_128):
    assert abs(circle_track_128.extinction_time - 0.125) / 0.125 < 0.02


def test_extinction_scaling_radii():
    # extinction scales as r0^2/2 in the plane
    for r0 in (0.4, 0.6, 0.8):
        g = Grid.centered(2.0, 128, dim=2)
        track = evolve(ShapeSpec.ball(r0, (0, 0)), 0.4, EvolveConfig(snapshot_every=100), grid=g)
        expect = r0 * r0 / 2
        assert abs(track.extinction_time - expect) / expect < 0.03


def test_region_and_boundary_slices(circle_track_128):
    track = circle_track_128
    g = track.grid
    outer0 = region_slice(track, 0.0, "outer_region")
    coords = g.meshgrid()
    rho = np.sqrt(sum(c * c for c in coords))
    assert np.array_equal(outer0, track.field(0).values >= 0)
    inside = rho <= 0.5 - g.spacing
    outside = rho >= 0.5 + g.spacing
    assert np.all(outer0[inside])
    assert not np.any(outer0[outside])
    # inner region is the complement's complement
    inner0 = region_slice(track, 0.0, "inner_region")
    assert np.all(inner0 <= outer0)
    # boundary slices nest into the zero set
    t_mid = track.times[len(track) // 2]
    outer = boundary_slice(track, t_mid, "outer")
    inner = boundary_slice(track, t_mid, "inner")
    zero = boundary_slice(track, t_mid, "zeroset")
    assert np.all(~outer | zero)
    assert np.all(~inner | zero)
    # past extinction everything is empty
    t_end = track.times[-1]
    if track.field(-1).values.max() < 0:
        assert not boundary_slice(track, t_end, "outer").any()
        assert not boundary_slice(track, t_end, "zeroset").any()
    with pytest.raises(TimeOutOfRange):
        region_slice(track, -1.0, "outer_region")


def test_containment_monotonicity(circle_track_128):
    track = circle_track_128
    from scipy import ndimage

    struct = ndimage.generate_binary_structure(2, 1)
    ks = range(0, len(track) - 1, max(1, len(track) // 8))
    for k in ks:
        r1 = track.field(k).values >= 0
        r2 = track.field(k + 1).values >= 0
        # one-cell tolerance
        assert not np.any(r2 & ~ndimage.binary_dilation(r1, structure=struct))


def test_complement_track_is_negation():
    g = Grid.centered(2.0, 96, dim=2)
    spec = ShapeSpec.ball(0.5, (0.0, 0.0))
    cfg = EvolveConfig(snapshot_every=30, compute_series=False)
    a = evolve(spec, 0.05, cfg, grid=g)
    b = evolve(complement(spec), 0.05, cfg, grid=g)
    assert len(a) == len(b)
    for k in range(len(a)):
        assert np.abs(a.field(k).values + b.field(k).values).max() < 1e-10


def test_fattening_none_for_circle(circle_pairs_2level):
    res = fattening_time(circle_pairs_2level)
    assert res.estimate is None
    assert all(r.first_time is None for r in res.table)


def test_discrepancy_none_for_circle(circle_pairs_2level):
    res = discrepancy_time(circle_pairs_2level)
    assert res.estimate is None


def test_fattening_triggers_for_eight(eight_pairs_2level):
    res = fattening_time(eight_pairs_2level)
    assert all(r.first_time is not None for r in res.table)
    # estimate decreases toward zero under refinement
    assert res.table[1].first_time < res.table[0].first_time
    h = eight_pairs_2level[-1][0].grid.spacing
    assert res.estimate <= 8 * h * h * (1 + 1e-9)


def test_discrepancy_not_applicable_for_eight(eight_pairs_2level):
    with pytest.raises(NotApplicable):
        discrepancy_time(eight_pairs_2level)


def test_ordering_invariant(circle_pairs_2level, eight_pairs_2level):
    # whenever both estimators are defined, t_fat >= t_disc - one interval;
    # with the bracket design the disc threshold sits below the fat one, so
    # the ordering is structural; check on a scenario where both trigger
    pair = eight_pairs_2level
    fat = fattening_time(pair)
    disc_like = fattening_time(pair, threshold_h=2.5)  # the disc threshold on the same set
    for rf, rd in zip(fat.table, disc_like.table):
        if rf.first_time is not None and rd.first_time is not None:
            assert rf.first_time >= rd.first_time - 1e-12


def test_left_limit_smooth_and_extinction(circle_track_128):
    track = circle_track_128
    t_mid = float(track.times[len(track) // 2])
    d = left_limit_check(track, t_mid)
    assert d <= 2 * track.grid.spacing
    # at the extinction snapshot the outer boundary limit collapses to the
    # center cells; the left-limit distance stays local
    d_end = left_limit_check(track, float(track.times[-1]))
    assert d_end <= 4 * track.grid.spacing


def test_arrival_time_circle(circle_track_128):
    track = circle_track_128
    g = track.grid
    region = track.field(0).values > 2 * g.spacing  # strictly inside the initial circle
    arr = arrival_time(track, region)
    for rho in (0.15, 0.3, 0.42):
        i = g.index_near((rho, 0.0))
        expect = (0.25 - np.linalg.norm(g.cell_center(i)) ** 2) / 2
        got = arr.values[i]
        assert np.isfinite(got)
        assert abs(got - expect) < 6 * g.spacing * rho  # O(h) in time via r dr
    # cells outside the initial circle are never reached
    j = g.index_near((0.8, 0.0))
    outside = np.zeros(g.shape, bool)
    outside[j] = True
    arr2 = arrival_time(track, outside)
    assert np.isnan(arr2.values[j])


def test_arrival_time_nonmonotone_raises(grid64):
    a = circle_sdf(grid64, 0.4)
    b = ScalarField(grid64, -a.values, 0.1)
    c = ScalarField(grid64, a.values.copy(), 0.2)
    track = SpacetimeTrack(grid64)
    for f in (a, b, c):
        track.append(f)
    with pytest.raises(NonMonotoneSweep):
        arrival_time(track, np.ones(grid64.shape, bool))


def test_series_rows_schema(circle_track_128):
    from levelflow.evolution import SERIES_COLUMNS

    rows = circle_track_128.series_rows
    assert rows, "series rows recorded"
    assert len(rows[0]) == len(SERIES_COLUMNS)
    # interface cell count reaches zero at the final snapshot
    assert rows[-1][3] == 0
    # fat band inradius stays small for the smooth circle
    assert max(float(r[6]) for r in rows[:-1]) < 4.0


def test_track_disk_roundtrip(tmp_path, grid64):
    spec = ShapeSpec.ball(0.4, (0.0, 0.0))
    cfg = EvolveConfig(snapshot_every=20, compute_series=False)
    track = evolve(spec, 0.02, cfg, grid=grid64, store=str(tmp_path / "run"))
    track.write_meta()
    back = SpacetimeTrack.from_dir(str(tmp_path / "run"))
    assert len(back) == len(track)
    assert np.allclose(back.times, track.times)
    assert np.array_equal(back.field(-1).values, track.field(-1).values)
    assert back.hot_log == track.hot_log

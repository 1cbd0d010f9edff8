import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelflow import Grid, ShapeSpec, complement, interface_cells, level_family, signed_distance
from levelflow.errors import EmptyLevel, LevelFlowError, ShapeOutOfDomain
from levelflow.reinit import distance_quality
from levelflow.shapes import eval_expression, exact_surface_points, parse_expression


def test_ball_values(grid128):
    spec = ShapeSpec.ball(0.5, (0.0, 0.0))
    f = signed_distance(spec, grid128)
    i = grid128.index_near((0.0, 0.0))
    center = grid128.cell_center(i)
    assert abs(f.values[i] - (0.5 - np.linalg.norm(center))) < 1e-12
    j = grid128.index_near((0.5, 0.0))
    p = grid128.cell_center(j)
    assert abs(f.values[j] - (0.5 - np.linalg.norm(p))) < 1e-12


def test_exact_kinds_match_surface_sampling(grid128):
    specs = [
        ShapeSpec.ball(0.55, (0.1, -0.05)),
        ShapeSpec.capsule((-0.3, 0.0), (0.3, 0.1), 0.25),
    ]
    g3 = Grid.centered(2.0, 48, dim=3)
    specs3 = [ShapeSpec.torus(0.4, 0.2)]
    for spec, grid in [(s, grid128) for s in specs] + [(s, g3) for s in specs3]:
        f = signed_distance(spec, grid)
        pts = exact_surface_points(spec, 10_000)
        vals = f.sample(pts)
        # surface points have zero signed distance up to interpolation error
        assert np.abs(vals).max() < 2 * grid.spacing
        if spec.kind == "ball":
            # against brute-force point-to-surface distance at cell centers
            idx = np.argwhere(np.abs(f.values) < 10 * grid.spacing)
            centers = idx * grid.spacing + np.asarray(grid.origin)
            brute = np.min(
                np.linalg.norm(centers[:, None, :] - pts[None, :500, :], axis=2), axis=1
            )
            signed = np.abs(f.values[tuple(idx.T)])
            assert np.abs(signed - brute).max() < 0.02


def test_band_gradient_property_all_kinds(grid128):
    # resolution requirement: the smallest feature (the dumbbell neck)
    # needs to span about five cells for the band to be distance-clean
    g3 = Grid.centered(2.0, 96, dim=3)
    cases = [
        (ShapeSpec.ball(0.5, (0.0, 0.0)), grid128),
        (ShapeSpec.capsule((-0.3, 0.0), (0.3, 0.0), 0.2), grid128),
        (ShapeSpec.star(0.5, 0.2, 5), grid128),
        (ShapeSpec.figure_eight(0.6), grid128),
        (ShapeSpec.sublevel("hypot(x,y)", 0.5), grid128),
        (ShapeSpec.dumbbell(0.3, 0.1, 0.45), g3),
        (ShapeSpec.torus(0.4, 0.2), g3),
    ]
    for spec, grid in cases:
        f = signed_distance(spec, grid)
        lo, hi = distance_quality(f)
        assert lo >= 0.95 and hi <= 1.05, (spec.kind, lo, hi)


def test_complement_is_negation_and_involution(grid128):
    spec = ShapeSpec.dumbbell(0.3, 0.12, 0.4)
    g3 = Grid.centered(2.0, 48, dim=3)
    f = signed_distance(spec, g3)
    fc = signed_distance(complement(spec), g3)
    assert np.array_equal(fc.values, -f.values)
    fcc = signed_distance(complement(complement(spec)), g3)
    assert np.array_equal(fcc.values, f.values)
    # far corner of the domain: outside the dumbbell, so the complement is positive
    assert fc.values[4, 4, 4] > 0


def test_complement_ball_center_value(grid128):
    f = signed_distance(complement(ShapeSpec.ball(0.5, (0.0, 0.0))), grid128)
    i = grid128.index_near((0.0, 0.0))
    assert abs(f.values[i] + 0.5) < grid128.spacing


def test_figure_eight_crossing(grid128):
    f = signed_distance(ShapeSpec.figure_eight(0.6), grid128)
    i = grid128.index_near((0.0, 0.0))
    # the crossing point lies on the curve
    assert abs(f.values[i]) < 1.5 * grid128.spacing
    # lobes are inside-positive, the vertical wedges are outside
    assert f.values[grid128.index_near((0.42, 0.0))] > 0
    assert f.values[grid128.index_near((0.0, 0.4))] < 0
    with pytest.raises(LevelFlowError):
        signed_distance(ShapeSpec.figure_eight(0.6), Grid.centered(2.0, 32, dim=3))


def test_dumbbell_validation():
    with pytest.raises(LevelFlowError):
        ShapeSpec.dumbbell(0.2, 0.3, 0.4)  # neck wider than lobe


def test_shape_out_of_domain(grid64):
    with pytest.raises(ShapeOutOfDomain):
        signed_distance(ShapeSpec.ball(0.98, (0.0, 0.0)), grid64)


def test_level_family_ball(grid128):
    spec = ShapeSpec.sublevel("hypot(x,y)")
    fam = level_family(spec, 0.5)
    f = signed_distance(fam, grid128)
    ball = signed_distance(ShapeSpec.ball(0.5, (0.0, 0.0)), grid128)
    band = np.abs(ball.values) <= 4 * grid128.spacing
    assert np.abs(f.values - ball.values)[band].max() < 0.1 * grid128.spacing


def test_level_family_two_balls(grid128):
    spec = ShapeSpec.sublevel("min(hypot(x-0.4,y), hypot(x+0.4,y))")
    f = signed_distance(level_family(spec, 0.25), grid128)
    from scipy import ndimage

    labels, n = ndimage.label(f.values >= 0)
    assert n == 2


def test_level_family_crossing_from_product(grid128):
    # product of two signed circle functions: the zero level is the union of
    # both circles, an immersed curve with crossings
    expr = "(hypot(x-0.2,y)-0.35)*(hypot(x+0.2,y)-0.35)"
    spec = ShapeSpec.sublevel(expr, 0.0)
    f = signed_distance(spec, grid128)
    cross = np.array([0.0, np.sqrt(0.35**2 - 0.04)])
    assert abs(f.values[grid128.index_near(cross)]) < 2 * grid128.spacing


def test_empty_level(grid64):
    with pytest.raises(EmptyLevel):
        signed_distance(ShapeSpec.sublevel("hypot(x,y)", -0.5), grid64)


def test_expression_grammar_errors():
    for bad in ("x +", "foo(x)", "x @ y", "min(x)", "(x"):
        with pytest.raises(LevelFlowError):
            parse_expression(bad)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(-0.3, 0.3))
def test_expression_eval_matches_numpy(r, c):
    node = parse_expression("hypot(x-%r,y)-%r" % (c, r))
    x = np.linspace(-1, 1, 31)
    X, Y = np.meshgrid(x, x, indexing="ij")
    got = eval_expression(node, {"x": X, "y": Y})
    assert np.allclose(got, np.hypot(X - c, Y) - r, rtol=1e-12)


def test_sublevel_interface_exists(grid64):
    f = signed_distance(ShapeSpec.sublevel("max(abs(x),abs(y))", 0.4), grid64)
    assert interface_cells(f).count > 0

import numpy as np
import pytest

from levelflow import EvolveConfig, Grid, ScalarField, ShapeSpec, evolve, flow_pair


@pytest.fixture(scope="session")
def grid128():
    return Grid.centered(2.0, 128, dim=2)


@pytest.fixture(scope="session")
def grid64():
    return Grid.centered(2.0, 64, dim=2)


def circle_sdf(grid, r0=0.5, center=(0.0, 0.0)):
    coords = grid.meshgrid()
    rho = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(coords, center)))
    return ScalarField(grid, r0 - rho)


@pytest.fixture(scope="session")
def circle_track_128(grid128):
    """Circle r0 = 0.5 evolved to extinction at 128^2 (exact t* = 0.125)."""
    return evolve(
        ShapeSpec.ball(0.5, (0.0, 0.0)),
        0.2,
        EvolveConfig(snapshot_every=25),
        grid=grid128,
    )


@pytest.fixture(scope="session")
def circle_pairs_2level():
    """(outer, inner) flow pairs for the circle at 64^2 and 128^2."""
    spec = ShapeSpec.ball(0.5, (0.0, 0.0))
    pairs = []
    for n, se in ((64, 10), (128, 40)):
        g = Grid.centered(2.0, n, dim=2)
        pairs.append(
            flow_pair(spec, 0.2, EvolveConfig(snapshot_every=se, compute_series=False), grid=g)
        )
    return pairs


@pytest.fixture(scope="session")
def eight_pairs_2level():
    spec = ShapeSpec.figure_eight(scale=0.6)
    pairs = []
    for n, se in ((64, 2), (128, 8)):
        g = Grid.centered(2.0, n, dim=2)
        pairs.append(
            flow_pair(spec, 0.01, EvolveConfig(snapshot_every=se, compute_series=False), grid=g)
        )
    return pairs

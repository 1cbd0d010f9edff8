"""Discrete differential operators on scalar fields.

Per-index reference implementations of the gradient, the level-set
curvature motion term |grad u| Div(grad u / |grad u|), the evolution
residual u_t - |grad u| Div(grad u / |grad u|), the normal velocity
-u_t/|grad u|, and the norm of the second fundamental form of the level
set through a cell.  The sign convention has u positive inside the
evolving region, so the unit normal grad u / |grad u| points inward and
the motion term is negative on the boundary of a shrinking ball.

Hot paths use the numba kernels in ``_kernels``; these scalar versions are
the readable reference the kernels are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateGradient, OutOfBand
from .grid import ScalarField


@dataclass(frozen=True)
class StencilConfig:
    """Knobs for the curvature stencil.

    curvature_regularization is added to |grad u|^2 in the curvature
    quotient denominator (must lie in [0, h^2]); grad_floor_factor sets the
    degeneracy floor |grad u| >= grad_floor_factor * h below which the
    motion is treated as zero; clip_factor bounds the motion term at
    clip_factor / h.
    """

    curvature_regularization: float = 1e-12
    gradient_scheme: str = "central"
    grad_floor_factor: float = 1e-8
    clip_factor: float = 1.0

    def grad_floor(self, h: float) -> float:
        return self.grad_floor_factor * h

    def clip(self, h: float) -> float:
        return self.clip_factor / h

    def validate(self, h: float) -> None:
        if not 0.0 <= self.curvature_regularization <= h * h:
            raise ValueError("curvature_regularization must lie in [0, h^2]")
        if self.gradient_scheme not in ("central", "upwind-godunov"):
            raise ValueError(f"unknown gradient scheme {self.gradient_scheme!r}")


DEFAULT_STENCIL = StencilConfig()


def _check_stencil_index(f: ScalarField, i: tuple[int, ...], reach: int = 1) -> None:
    for axis, ix in enumerate(i):
        if ix < reach or ix > f.grid.shape[axis] - 1 - reach:
            raise OutOfBand(f"index {i} within {reach} cells of the array edge")


def _shift(i: tuple[int, ...], axis: int, by: int) -> tuple[int, ...]:
    j = list(i)
    j[axis] += by
    return tuple(j)


def gradient(
    f: ScalarField,
    i: tuple[int, ...],
    scheme: str = "central",
    speed_sign: float = 1.0,
) -> np.ndarray:
    """Discrete gradient at cell ``i``.

    ``central`` is the 2nd-order centered difference.  ``upwind-godunov``
    picks, per axis, the one-sided difference selected by the Godunov
    Hamiltonian for eikonal-type motion with the given speed sign
    (components are 0 where both one-sided candidates are rejected).
    """
    _check_stencil_index(f, i)
    v = f.values
    h = f.grid.spacing
    out = np.zeros(f.grid.dim)
    for axis in range(f.grid.dim):
        vp = v[_shift(i, axis, +1)]
        vm = v[_shift(i, axis, -1)]
        vc = v[i]
        if scheme == "central":
            out[axis] = (vp - vm) / (2 * h)
        elif scheme == "upwind-godunov":
            dm = (vc - vm) / h
            dp = (vp - vc) / h
            if speed_sign > 0:
                dm, dp = max(dm, 0.0), min(dp, 0.0)
            else:
                dm, dp = min(dm, 0.0), max(dp, 0.0)
            out[axis] = dm if abs(dm) >= abs(dp) else dp
        else:
            raise ValueError(f"unknown gradient scheme {scheme!r}")
    return out


def hessian(f: ScalarField, i: tuple[int, ...]) -> np.ndarray:
    """Second-order central Hessian; mixed terms use the averaged corner stencil."""
    _check_stencil_index(f, i)
    v = f.values
    h = f.grid.spacing
    d = f.grid.dim
    H = np.zeros((d, d))
    for a in range(d):
        H[a, a] = (v[_shift(i, a, +1)] - 2 * v[i] + v[_shift(i, a, -1)]) / (h * h)
        for b in range(a + 1, d):
            pp = v[_shift(_shift(i, a, +1), b, +1)]
            pm = v[_shift(_shift(i, a, +1), b, -1)]
            mp = v[_shift(_shift(i, a, -1), b, +1)]
            mm = v[_shift(_shift(i, a, -1), b, -1)]
            H[a, b] = H[b, a] = (pp - pm - mp + mm) / (4 * h * h)
    return H


def curvature_term(
    f: ScalarField, i: tuple[int, ...], cfg: StencilConfig = DEFAULT_STENCIL
) -> float:
    """|grad u| Div(grad u/|grad u|) at cell ``i``.

    Equals Laplacian(u) minus the second derivative in the gradient
    direction.  For u = r0 - |x| this is -(dim-1)/|x|, the motion term of a
    shrinking sphere.  Raises DegenerateGradient below the gradient floor.
    """
    g = gradient(f, i, "central")
    g2 = float(g @ g)
    h = f.grid.spacing
    floor = cfg.grad_floor(h)
    if g2 <= floor * floor:
        raise DegenerateGradient(f"|grad u| <= {floor:g} at {i}")
    H = hessian(f, i)
    return float(np.trace(H) - (g @ H @ g) / (g2 + cfg.curvature_regularization))


def flow_residual(
    f_prev: ScalarField,
    f_next: ScalarField,
    dt: float,
    i: tuple[int, ...],
    cfg: StencilConfig = DEFAULT_STENCIL,
) -> float:
    """Residual of the level-set evolution law between two snapshots.

    u_t - |grad u| Div(grad u/|grad u|), with u_t the forward difference
    over ``dt`` and the curvature term evaluated on ``f_next``.  Zero (to
    discretization error) exactly when the level sets move by mean
    curvature.
    """
    if f_prev.grid is not f_next.grid and f_prev.grid != f_next.grid:
        raise ValueError("snapshots live on different grids")
    if dt <= 0:
        raise ValueError("dt must be positive")
    ut = (f_next.values[i] - f_prev.values[i]) / dt
    return float(ut - curvature_term(f_next, i, cfg))


def normal_velocity(
    f_prev: ScalarField,
    f_next: ScalarField,
    dt: float,
    i: tuple[int, ...],
    cfg: StencilConfig = DEFAULT_STENCIL,
) -> float:
    """Normal speed -u_t/|grad u| of the level set through cell ``i``.

    Positive means motion in the direction of grad u/|grad u|, the normal
    pointing into the superlevel region.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = gradient(f_next, i, "central")
    gn = float(np.sqrt(g @ g))
    floor = cfg.grad_floor(f_next.grid.spacing)
    if gn <= floor:
        raise DegenerateGradient(f"|grad u| <= {floor:g} at {i}")
    ut = (f_next.values[i] - f_prev.values[i]) / dt
    return float(-ut / gn)


def second_fundamental_form_norm(
    f: ScalarField, i: tuple[int, ...], cfg: StencilConfig = DEFAULT_STENCIL
) -> float:
    """Frobenius norm of the second fundamental form of the level set at ``i``.

    Computed as |P H P| / |grad u| with P the tangential projector.
    A sphere of radius r in R^(n+1) gives sqrt(n)/r.
    """
    g = gradient(f, i, "central")
    gn = float(np.sqrt(g @ g))
    floor = cfg.grad_floor(f.grid.spacing)
    if gn <= floor:
        raise DegenerateGradient(f"|grad u| <= {floor:g} at {i}")
    H = hessian(f, i)
    n = g / gn
    P = np.eye(f.grid.dim) - np.outer(n, n)
    B = P @ H @ P / gn
    return float(np.sqrt(np.sum(B * B)))


# ---------------------------------------------------------------------------
# vectorized band evaluation (wrappers over the numba kernels)

def curvature_motion_at(
    values: np.ndarray,
    idx: np.ndarray,
    h: float,
    cfg: StencilConfig = DEFAULT_STENCIL,
    clip: float | None = None,
) -> tuple[np.ndarray, int]:
    """Clipped curvature motion term at an (m, dim) array of cell indices."""
    floor = cfg.grad_floor(h)
    c = cfg.clip(h) if clip is None else clip
    if values.ndim == 2:
        return _kernels.curvature_cells_2d(
            values, idx[:, 0], idx[:, 1], h, cfg.curvature_regularization, floor * floor, c
        )
    return _kernels.curvature_cells_3d(
        values, idx[:, 0], idx[:, 1], idx[:, 2], h, cfg.curvature_regularization, floor * floor, c
    )


def abs_A_at(
    values: np.ndarray,
    idx: np.ndarray,
    h: float,
    cfg: StencilConfig = DEFAULT_STENCIL,
) -> np.ndarray:
    """Second-fundamental-form norm at an (m, dim) array of cell indices."""
    floor = cfg.grad_floor(h)
    if values.ndim == 2:
        return _kernels.abs_A_cells_2d(values, idx[:, 0], idx[:, 1], h, floor * floor)
    return _kernels.abs_A_cells_3d(values, idx[:, 0], idx[:, 1], idx[:, 2], h, floor * floor)

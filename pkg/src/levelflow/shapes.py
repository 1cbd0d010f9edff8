"""Analytic initial regions and their signed distance fields.

Shapes are declared by kind plus a parameter table.  The sign convention
puts u > 0 inside the region.  Ball, capsule and torus have exact signed
distances; composite kinds (dumbbell, star, figure-eight curve, sublevels
of a grammar expression) build an approximate field and are reinitialized.

The figure-eight curve bounds no region, so its field is the distance to a
thin tube around the curve (positive within ``tube_radius_factor * h`` of
the curve, the negated unsigned distance outside).  Evolving that field
tracks the level set flow of the curve at grid resolution; only the
fattening estimator applies to it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyLevel, LevelFlowError, NoInterface, ShapeOutOfDomain
from .grid import Grid, ScalarField, interface_cells
from .reinit import reinitialize

SHAPE_KINDS = (
    "ball",
    "capsule",
    "torus",
    "dumbbell",
    "star",
    "figure_eight_curve",
    "sublevel_of_function",
)

EXACT_KINDS = ("ball", "capsule", "torus")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    params: dict = dc_field(default_factory=dict)
    inside_positive: bool = True

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise LevelFlowError(f"unknown shape kind {self.kind!r}")
        _validate_params(self.kind, self.params)

    @classmethod
    def ball(cls, radius: float, center=(0.0, 0.0)) -> "ShapeSpec":
        return cls("ball", {"radius": radius, "center": list(center)})

    @classmethod
    def capsule(cls, a, b, radius: float) -> "ShapeSpec":
        return cls("capsule", {"a": list(a), "b": list(b), "radius": radius})

    @classmethod
    def torus(cls, major_radius: float, minor_radius: float, center=(0.0, 0.0, 0.0)) -> "ShapeSpec":
        return cls(
            "torus",
            {"major_radius": major_radius, "minor_radius": minor_radius, "center": list(center)},
        )

    @classmethod
    def dumbbell(cls, lobe_radius: float, neck_radius: float, separation: float) -> "ShapeSpec":
        return cls(
            "dumbbell",
            {
                "lobe_radius": lobe_radius,
                "neck_radius": neck_radius,
                "separation": separation,
            },
        )

    @classmethod
    def star(cls, radius: float, amplitude: float, frequency: int, center=(0.0, 0.0)) -> "ShapeSpec":
        return cls(
            "star",
            {
                "radius": radius,
                "amplitude": amplitude,
                "frequency": frequency,
                "center": list(center),
            },
        )

    @classmethod
    def figure_eight(cls, scale: float = 0.6, tube_radius_factor: float = 2.0, center=(0.0, 0.0)) -> "ShapeSpec":
        return cls(
            "figure_eight_curve",
            {"scale": scale, "tube_radius_factor": tube_radius_factor, "center": list(center)},
        )

    @classmethod
    def sublevel(cls, expression: str, level: float = 0.0) -> "ShapeSpec":
        return cls("sublevel_of_function", {"expression": expression, "level": level})


def _validate_params(kind: str, p: dict) -> None:
    def need(*names):
        for n in names:
            if n not in p:
                raise LevelFlowError(f"shape {kind!r} missing parameter {n!r}")

    if kind == "ball":
        need("radius", "center")
        if p["radius"] <= 0:
            raise LevelFlowError("ball radius must be positive")
    elif kind == "capsule":
        need("a", "b", "radius")
        if p["radius"] <= 0:
            raise LevelFlowError("capsule radius must be positive")
    elif kind == "torus":
        need("major_radius", "minor_radius", "center")
        if not 0 < p["minor_radius"] < p["major_radius"]:
            raise LevelFlowError("torus requires 0 < minor_radius < major_radius")
    elif kind == "dumbbell":
        need("lobe_radius", "neck_radius", "separation")
        if p["neck_radius"] <= 0 or p["lobe_radius"] <= 0:
            raise LevelFlowError("dumbbell radii must be positive")
        if p["neck_radius"] >= p["lobe_radius"]:
            raise LevelFlowError("dumbbell neck_radius must be smaller than lobe_radius")
    elif kind == "star":
        need("radius", "amplitude", "frequency", "center")
        if not 0 <= p["amplitude"] < 1:
            raise LevelFlowError("star amplitude must lie in [0, 1)")
        if p["radius"] <= 0:
            raise LevelFlowError("star radius must be positive")
    elif kind == "figure_eight_curve":
        need("scale", "center")
        if p["scale"] <= 0:
            raise LevelFlowError("figure-eight scale must be positive")
    elif kind == "sublevel_of_function":
        need("expression")
        parse_expression(p["expression"])  # syntax check


def complement(spec: ShapeSpec) -> ShapeSpec:
    """Closure of the complement region: flips the sign of the distance field."""
    return replace(spec, inside_positive=not spec.inside_positive)


def level_family(spec: ShapeSpec, s: float) -> ShapeSpec:
    """Region {phi <= s} for a sublevel shape."""
    if spec.kind != "sublevel_of_function":
        raise LevelFlowError("level_family requires a sublevel_of_function shape")
    params = dict(spec.params)
    params["level"] = float(s)
    return replace(spec, params=params)


# ---------------------------------------------------------------------------
# expression grammar: numbers, x/y/z, + - * /, parentheses, unary minus,
# functions abs/sqrt/sin/cos/exp/hypot/min/max

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/,]))"
)

_FUNCS = {
    "abs": (np.abs, 1, 1),
    "sqrt": (np.sqrt, 1, 1),
    "sin": (np.sin, 1, 1),
    "cos": (np.cos, 1, 1),
    "exp": (np.exp, 1, 1),
    "hypot": (None, 2, 3),
    "min": (None, 2, None),
    "max": (None, 2, None),
}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise LevelFlowError(f"bad expression near {text[pos:pos+12]!r}")
        pos = m.end()
        for kind in ("num", "name", "op"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val))
                break
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None, value=None):
        k, v = self.tokens[self.pos]
        if (kind and k != kind) or (value and v != value):
            raise LevelFlowError(f"expression syntax error at token {v!r}")
        self.pos += 1
        return v

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise LevelFlowError(f"trailing input in expression: {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take("op")
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take("op")
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take("op")
            return ("neg", self.unary())
        return self.atom()

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ("num", float(val))
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                if val not in _FUNCS:
                    raise LevelFlowError(f"unknown function {val!r}")
                self.take("op", "(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take("op", ",")
                    args.append(self.expr())
                self.take("op", ")")
                _, amin, amax = _FUNCS[val]
                if len(args) < amin or (amax is not None and len(args) > amax):
                    raise LevelFlowError(f"function {val!r} takes {amin}..{amax} arguments")
                return ("call", val, args)
            if val not in ("x", "y", "z"):
                raise LevelFlowError(f"unknown variable {val!r} (use x, y, z)")
            return ("var", val)
        if (kind, val) == ("op", "("):
            self.take("op", "(")
            node = self.expr()
            self.take("op", ")")
            return node
        raise LevelFlowError(f"expression syntax error at {val!r}")


def parse_expression(text: str):
    return _Parser(_tokenize(text)).parse()


def eval_expression(node, coords: dict[str, np.ndarray]) -> np.ndarray:
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        if node[1] not in coords:
            raise LevelFlowError(f"variable {node[1]!r} not available in this dimension")
        return coords[node[1]]
    if op == "neg":
        return -eval_expression(node[1], coords)
    if op in ("+", "-", "*", "/"):
        a = eval_expression(node[1], coords)
        b = eval_expression(node[2], coords)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    if op == "call":
        name, args = node[1], [eval_expression(a, coords) for a in node[2]]
        if name == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if name == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        if name == "hypot":
            return np.sqrt(sum(np.square(a) for a in args))
        return _FUNCS[name][0](args[0])
    raise LevelFlowError(f"bad expression node {node!r}")


# ---------------------------------------------------------------------------
# field construction

def _segment_distance(pts: list[np.ndarray], a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return np.sqrt(sum((p - ai) ** 2 for p, ai in zip(pts, a)))
    t = sum((p - ai) * di for p, ai, di in zip(pts, a, ab)) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.sqrt(sum((p - (ai + t * di)) ** 2 for p, ai, di in zip(pts, a, ab)))


def figure_eight_points(scale: float, center, n: int = 4096) -> np.ndarray:
    """Dense polyline on the Gerono lemniscate; the self-crossing sits at ``center``."""
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x = scale * np.sin(t) + center[0]
    y = scale * np.sin(t) * np.cos(t) + center[1]
    return np.column_stack([x, y])


def _raw_inside_field(spec: ShapeSpec, grid: Grid) -> tuple[np.ndarray, bool]:
    """Inside-positive field and whether it is already an exact signed distance."""
    pts = grid.meshgrid()
    p = spec.params
    kind = spec.kind
    if kind == "ball":
        c = p["center"]
        if len(c) != grid.dim:
            raise LevelFlowError("ball center dimension does not match grid")
        rho = np.sqrt(sum((q - ci) ** 2 for q, ci in zip(pts, c)))
        return p["radius"] - rho, True
    if kind == "capsule":
        return p["radius"] - _segment_distance(pts, p["a"], p["b"]), True
    if kind == "torus":
        if grid.dim != 3:
            raise LevelFlowError("torus requires a 3-D grid")
        c = p["center"]
        ring = np.sqrt((pts[0] - c[0]) ** 2 + (pts[1] - c[1]) ** 2) - p["major_radius"]
        return p["minor_radius"] - np.sqrt(ring**2 + (pts[2] - c[2]) ** 2), True
    if kind == "dumbbell":
        R, rho, L = p["lobe_radius"], p["neck_radius"], p["separation"]
        zeros = [0.0] * (grid.dim - 1)
        lobe1 = R - np.sqrt(sum((q - ci) ** 2 for q, ci in zip(pts, [L] + zeros)))
        lobe2 = R - np.sqrt(sum((q - ci) ** 2 for q, ci in zip(pts, [-L] + zeros)))
        neck = rho - _segment_distance(pts, [-L] + zeros, [L] + zeros)
        # smooth union keeps the field C^1 where the pieces meet; a fillet
        # of four cells stays below the unresolvable-curvature threshold,
        # so the construction crease never registers as a blow-up
        k = 4.0 * grid.spacing
        f = _smooth_max(_smooth_max(lobe1, lobe2, k), neck, k)
        return f, False
    if kind == "star":
        c = p["center"]
        rho = np.sqrt(sum((q - ci) ** 2 for q, ci in zip(pts, c)))
        theta = np.arctan2(pts[1] - c[1], pts[0] - c[0])
        radius = p["radius"] * (1.0 + p["amplitude"] * np.cos(p["frequency"] * theta))
        return radius - rho, False
    if kind == "figure_eight_curve":
        if grid.dim != 2:
            raise LevelFlowError("figure_eight_curve is only valid on 2-D grids")
        a = p["scale"]
        cloud = figure_eight_points(a, p["center"])
        tree = cKDTree(cloud)
        q = np.column_stack([q.ravel() for q in pts])
        dist = tree.query(q, k=1)[0].reshape(grid.shape)
        # the Gerono lemniscate has the implicit form a^2 x^2 - x^4 - a^2 y^2,
        # positive exactly inside the two lobes; signing the curve distance
        # with it makes the zero set the full immersed curve, crossing
        # included (the curve bounds no region, so there is no global
        # inside; the lobe parity is the two-sided structure the level set
        # flow of the curve sees)
        X = pts[0] - p["center"][0]
        Y = pts[1] - p["center"][1]
        lobes = a * a * X * X - X**4 - a * a * Y * Y
        return np.where(lobes >= 0, dist, -dist), False
    if kind == "sublevel_of_function":
        coords = {name: pts[a] for a, name in zip(range(grid.dim), "xyz")}
        phi = eval_expression(parse_expression(p["expression"]), coords)
        phi = np.broadcast_to(np.asarray(phi, dtype=float), grid.shape).copy()
        return p.get("level", 0.0) - phi, False
    raise LevelFlowError(f"unknown shape kind {kind!r}")


def _smooth_max(a, b, k):
    return 0.5 * (a + b + np.sqrt((a - b) ** 2 + k * k))


def signed_distance(spec: ShapeSpec, grid: Grid) -> ScalarField:
    """Signed distance field of the shape on the grid (positive inside).

    Exact for ball/capsule/torus; composite kinds are reinitialized.
    Raises ShapeOutOfDomain when the interface comes within 5h of the
    domain boundary and EmptyLevel when a sublevel set misses the grid.
    """
    raw, exact = _raw_inside_field(spec, grid)
    f = ScalarField(grid, raw)
    band = interface_cells(f)
    if not band:
        if spec.kind == "sublevel_of_function":
            raise EmptyLevel(f"level {spec.params.get('level', 0.0)} misses the grid")
        raise NoInterface(f"{spec.kind} has no interface on this grid")
    _check_margin(band.mask, grid)
    if not exact:
        f = reinitialize(f, seed_slack=0.03, correction_taper=0.0)
    if not spec.inside_positive:
        f = f.with_values(-f.values)
    return f


def _check_margin(interface_mask: np.ndarray, grid: Grid, margin_cells: int = 5) -> None:
    idx = np.argwhere(interface_mask)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    for axis in range(grid.dim):
        if lo[axis] < grid.ghost + margin_cells or hi[axis] >= grid.ghost + grid.counts[axis] - margin_cells:
            raise ShapeOutOfDomain(
                f"interface within {margin_cells} cells of the domain boundary on axis {axis}"
            )


def exact_surface_points(spec: ShapeSpec, n: int, seed: int = 0) -> np.ndarray:
    """Sample points on the exact boundary of an analytic shape (test oracle)."""
    rng = np.random.default_rng(seed)
    p = spec.params
    if spec.kind == "ball":
        c = np.asarray(p["center"], dtype=float)
        dim = len(c)
        v = rng.normal(size=(n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return c + p["radius"] * v
    if spec.kind == "torus":
        c = np.asarray(p["center"], dtype=float)
        u = rng.uniform(0, 2 * math.pi, n)
        w = rng.uniform(0, 2 * math.pi, n)
        ring = p["major_radius"] + p["minor_radius"] * np.cos(w)
        return c + np.column_stack(
            [ring * np.cos(u), ring * np.sin(u), p["minor_radius"] * np.sin(w)]
        )
    if spec.kind == "capsule":
        a = np.asarray(p["a"], dtype=float)
        b = np.asarray(p["b"], dtype=float)
        dim = len(a)
        t = rng.uniform(0, 1, n)
        axis_pt = a + t[:, None] * (b - a)
        v = rng.normal(size=(n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        pts = axis_pt + p["radius"] * v
        # project back onto the capsule surface: distance to segment equals radius
        d = _segment_distance([pts[:, k] for k in range(dim)], a, b)
        keep = np.abs(d - p["radius"]) < 1e-9
        return pts[keep]
    raise LevelFlowError(f"no exact surface sampling for kind {spec.kind!r}")

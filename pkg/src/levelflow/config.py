"""Run configuration: TOML scenario files with validation.

The format is plain TOML: named sections, ``key = value`` pairs, arrays of
tables for the certificate bank.  All physical quantities are
dimensionless (unit box convention).  See configs/ in the repository for
annotated examples.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .evolution import EvolveConfig
from .grid import Grid
from .operators import StencilConfig
from .shapes import SHAPE_KINDS, ShapeSpec, complement


@dataclass
class CertificateBank:
    enabled: bool = True
    tol_factor: float = 2.0
    residual_levels: list[float] = dc_field(default_factory=lambda: [0.0])
    avoidance: list[dict] = dc_field(default_factory=list)
    scaled: list[dict] = dc_field(default_factory=list)


@dataclass
class DiagnosticsConfig:
    fattening: bool = True
    discrepancy: bool = True
    singularities: bool = True
    blowup: bool = True
    probe_samples: int = 50
    theta_sing: float = 0.5


@dataclass
class RunConfig:
    name: str
    dim: int
    counts: int
    extent: float
    ghost: int
    levels: int
    shape: ShapeSpec
    t_end: float
    evolve: EvolveConfig
    diagnostics: DiagnosticsConfig
    certificates: CertificateBank
    sweep: dict | None
    seed: int = 0
    threads: int = 1
    out: str | None = None
    config_hash: str = ""

    def grid_for_level(self, level: int) -> Grid:
        return Grid.centered(self.extent, self.counts * (2**level), dim=self.dim, ghost=self.ghost)

    def evolve_config_for_level(self, level: int) -> EvolveConfig:
        cfg = self.evolve
        return EvolveConfig(
            dt_factor=cfg.dt_factor,
            band_radius=cfg.band_radius,
            reinit_travel=cfg.reinit_travel,
            reinit_every=cfg.reinit_every,
            snapshot_every=cfg.snapshot_every * (4**level),
            stencil=cfg.stencil,
            margin_cells=cfg.margin_cells,
            compute_series=cfg.compute_series,
        )


def _get(table: dict, key: str, kind, default=None, where: str = "", required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {key!r}", where)
        return default
    val = table[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(f"{key} must be of type {kind.__name__}, got {type(val).__name__}", where)
    return val


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
        data = tomllib.loads(raw_bytes.decode("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML parse error: {e}", str(path))
    cfg = parse_config(data)
    cfg.config_hash = hashlib.sha256(raw_bytes).hexdigest()
    return cfg


def parse_config(data: dict) -> RunConfig:
    run = data.get("run", {})
    name = _get(run, "name", str, "run", where="run")
    seed = _get(run, "seed", int, 0, where="run")
    threads = _get(run, "threads", int, 1, where="run")
    out = _get(run, "out", str, None, where="run")

    gsec = data.get("grid", {})
    dim = _get(gsec, "dim", int, 2, where="grid")
    if dim not in (2, 3):
        raise ConfigError("dim must be 2 or 3", "grid.dim")
    counts = _get(gsec, "counts", int, 128, where="grid")
    extent = _get(gsec, "extent", float, 2.0, where="grid")
    ghost = _get(gsec, "ghost", int, 3, where="grid")
    levels = _get(gsec, "levels", int, 1, where="grid")
    if levels < 1:
        raise ConfigError("levels must be at least 1", "grid.levels")
    if counts < 8:
        raise ConfigError("counts must be at least 8", "grid.counts")
    if extent <= 0:
        raise ConfigError("extent must be positive", "grid.extent")

    ssec = data.get("shape")
    if ssec is None:
        raise ConfigError("missing [shape] section", "shape")
    kind = _get(ssec, "kind", str, where="shape", required=True)
    if kind not in SHAPE_KINDS:
        raise ConfigError(f"unknown shape kind {kind!r} (one of {SHAPE_KINDS})", "shape.kind")
    params = {k: v for k, v in ssec.items() if k not in ("kind", "complement")}
    try:
        shape = ShapeSpec(kind, params)
    except Exception as e:
        raise ConfigError(str(e), "shape")
    if _get(ssec, "complement", bool, False, where="shape"):
        shape = complement(shape)

    tsec = data.get("time", {})
    t_end = _get(tsec, "t_end", float, where="time", required=True)
    if t_end <= 0:
        raise ConfigError("t_end must be positive", "time.t_end")
    esec = data.get("evolution", {})
    stencil = StencilConfig(
        curvature_regularization=_get(esec, "eps_reg", float, 1e-12, where="evolution"),
        grad_floor_factor=_get(esec, "grad_floor", float, 1e-8, where="evolution"),
        clip_factor=_get(esec, "clip_factor", float, 1.0, where="evolution"),
    )
    evolve_cfg = EvolveConfig(
        dt_factor=_get(tsec, "dt_factor", float, 0.2, where="time"),
        band_radius=_get(esec, "band_radius", float, 10.0, where="evolution"),
        reinit_travel=_get(tsec, "reinit_travel", float, 0.3, where="time"),
        reinit_every=_get(tsec, "reinit_every", int, None, where="time"),
        snapshot_every=_get(tsec, "snapshot_every", int, 10, where="time"),
        stencil=stencil,
    )
    if evolve_cfg.dt_factor <= 0 or evolve_cfg.dt_factor > 0.25:
        raise ConfigError("dt_factor must lie in (0, 0.25]", "time.dt_factor")

    dsec = data.get("diagnostics", {})
    diagnostics = DiagnosticsConfig(
        fattening=_get(dsec, "fattening", bool, True, where="diagnostics"),
        discrepancy=_get(dsec, "discrepancy", bool, True, where="diagnostics"),
        singularities=_get(dsec, "singularities", bool, True, where="diagnostics"),
        blowup=_get(dsec, "blowup", bool, True, where="diagnostics"),
        probe_samples=_get(dsec, "probe_samples", int, 50, where="diagnostics"),
        theta_sing=_get(dsec, "theta_sing", float, 0.5, where="diagnostics"),
    )

    csec = data.get("certificates", {})
    bank = CertificateBank(
        enabled=_get(csec, "enabled", bool, True, where="certificates"),
        tol_factor=_get(csec, "tol_factor", float, 2.0, where="certificates"),
        residual_levels=list(csec.get("residual_levels", [0.0])),
        avoidance=list(csec.get("avoidance", [])),
        scaled=list(csec.get("scaled", [])),
    )
    for i, entry in enumerate(bank.avoidance):
        for key in ("kind", "r0", "k", "center"):
            if key not in entry:
                raise ConfigError(f"missing {key!r}", f"certificates.avoidance[{i}]")
    for i, entry in enumerate(bank.scaled):
        for key in ("alpha", "c", "flow"):
            if key not in entry:
                raise ConfigError(f"missing {key!r}", f"certificates.scaled[{i}]")

    sweep = data.get("sweep")
    if sweep is not None:
        if "s_values" not in sweep:
            raise ConfigError("missing s_values", "sweep")
        if shape.kind != "sublevel_of_function":
            raise ConfigError("sweep requires shape.kind = sublevel_of_function", "sweep")

    return RunConfig(
        name=name,
        dim=dim,
        counts=counts,
        extent=extent,
        ghost=ghost,
        levels=levels,
        shape=shape,
        t_end=t_end,
        evolve=evolve_cfg,
        diagnostics=diagnostics,
        certificates=bank,
        sweep=sweep,
        seed=seed,
        threads=threads,
        out=out,
    )

"""Command line interface: run scenarios, sweep level families, export contours.

Subcommands:
    run              evolve + diagnostics + certificates, write an artifact dir
    sweep            level-family sweep of a sublevel shape, write a CSV table
    export-contours  extract zero-set polylines/triangles from an artifact dir
    classify         re-run the singularity analysis on existing artifacts
    certify          re-run the certificate bank on existing artifacts

Exit codes: 0 all enabled certificates pass, 1 certificate failure,
2 configuration error, 3 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .certificates import (
    SmoothTestFlow,
    avoidance_check,
    countable_times_probe,
    level_sweep,
    residual_certificate,
    scaled_levelset_avoidance,
)
from .config import RunConfig, load_config
from .contours import write_cell_set, write_contour_file
from .errors import ConfigError, LevelFlowError, NotApplicable
from .evolution import (
    DiagnosticsReport,
    SpacetimeTrack,
    boundary_slice,
    discrepancy_time,
    evolve,
    fattening_time,
    flow_pair,
)
from .grid import load_snapshot
from .shapes import level_family
from .singularity import (
    BlowupResult,
    convexity_defect,
    curvature_scale_product,
    detect_singularities,
    gaussian_density,
    mean_convex_type_check,
    parabolic_rescale,
    shrinker_fit,
)


def _level_dir(out: str, level: int) -> str:
    return os.path.join(out, f"level{level}")


def _evolve_level(cfg: RunConfig, level: int, out: str) -> SpacetimeTrack:
    grid = cfg.grid_for_level(level)
    return evolve(
        cfg.shape,
        cfg.t_end,
        cfg.evolve_config_for_level(level),
        grid=grid,
        store=_level_dir(out, level),
    )


def _run_levels(cfg: RunConfig, out: str) -> list[SpacetimeTrack]:
    levels = list(range(cfg.levels))
    if cfg.threads > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_evolve_level, cfg, lv, out) for lv in levels]
            return [f.result() for f in futures]
    return [_evolve_level(cfg, lv, out) for lv in levels]


def _analyze_blowup(track: SpacetimeTrack, event, seed: int) -> BlowupResult | None:
    from .grid import Grid

    h = track.grid.spacing
    usable = [(t, a) for t, a in event.curvature_history if a > 0.05 / h]
    if not usable:
        return None
    qs = sorted(a for _, a in usable)[-3:]
    t_back = event.time - float(track.times[0])

    # scan rescale factors and window radii and keep the cleanest fit: the
    # tangent flow emerges in small windows about the blow-up point, while
    # wide windows see the opening hourglass around a pinch
    kind, residual_h, defect = "other", float("nan"), float("nan")
    best = math.inf
    for q in (0.7 * qs[-1], qs[-1]):
        if 0.5 / (q * q) >= t_back:
            continue
        for radius in (1.25, 2.5, 5.0):
            try:
                rg = Grid.centered(2 * radius, 48, dim=track.grid.dim, ghost=2)
                rescaled = parabolic_rescale(
                    track, event.position, event.time, q, times=(-0.5,), rescale_grid=rg
                )
                mid = rescaled.field(0)
                k, r, _params = shrinker_fit(mid)
                if r < best:
                    best = r
                    kind, residual_h = k, r
                    defect = convexity_defect(mid.values >= 0, seed=seed)
            except LevelFlowError:
                continue
    try:
        t_back = event.time - float(track.times[0])
        scales = [r * h for r in (6, 9, 12) if (r * h) ** 2 <= 0.8 * t_back]
        if not scales:
            scales = [math.sqrt(0.5 * t_back)]
        density, table = gaussian_density(track, event.position, event.time, r_scales=scales)
    except LevelFlowError:
        density, table = float("nan"), []
    try:
        hr = curvature_scale_product(
            track, event.position, event.time, window_radius=10 * h, seed=seed
        )
    except LevelFlowError:
        hr = None
    return BlowupResult(
        rescale_factors=[float(x) for x in qs],
        fit_kind=kind,
        fit_residual=residual_h,
        convexity_defect=defect,
        gaussian_density=density,
        density_scales=[v for _, v in table],
        curvature_scale_product=hr,
    )


def _flow_pairs(cfg: RunConfig, out: str | None) -> list:
    pairs = []
    for lv in range(cfg.levels):
        ecfg = cfg.evolve_config_for_level(lv)
        ecfg.compute_series = False
        pairs.append(
            flow_pair(
                cfg.shape,
                cfg.t_end,
                ecfg,
                grid=cfg.grid_for_level(lv),
                store_outer=os.path.join(out, f"level{lv}", "pair_outer") if out else None,
                store_inner=os.path.join(out, f"level{lv}", "pair_inner") if out else None,
            )
        )
    return pairs


def _diagnose(cfg: RunConfig, tracks: list[SpacetimeTrack], pairs: list | None = None) -> DiagnosticsReport:
    report = DiagnosticsReport()
    report.extinction_time = tracks[-1].extinction_time
    report.refinement_metadata = [
        {"level": lv, "counts": cfg.counts * 2**lv, "h": t.grid.spacing}
        for lv, t in enumerate(tracks)
    ]
    if pairs:
        if cfg.diagnostics.fattening:
            report.t_fat = fattening_time(pairs)
        if cfg.diagnostics.discrepancy:
            try:
                report.t_disc = discrepancy_time(pairs)
            except NotApplicable:
                report.t_disc_not_applicable = True
    if cfg.diagnostics.singularities and len(tracks) >= 2:
        events = detect_singularities(tracks[-2:], cfg.diagnostics.theta_sing)
        fine = tracks[-1]
        for i, ev in enumerate(events):
            ev.classification = mean_convex_type_check(fine, ev)
            if cfg.diagnostics.blowup:
                ev.blowup = _analyze_blowup(fine, ev, seed=cfg.seed + i)
        report.singular_events = events
    return report


def _certify(cfg: RunConfig, track: SpacetimeTrack) -> list:
    bank = cfg.certificates
    results = []
    if not bank.enabled:
        return results
    for entry in bank.avoidance:
        flow = SmoothTestFlow(
            kind=entry["kind"],
            center=tuple(entry["center"]),
            r0=float(entry["r0"]),
            k=int(entry["k"]),
            axis=tuple(entry["axis"]) if "axis" in entry else None,
        )
        results.append(avoidance_check(track, flow, level=float(entry.get("level", 0.0))))
    for c in bank.residual_levels:
        for side in ("super", "sub"):
            results.append(residual_certificate(track, float(c), side, bank.tol_factor))
    for entry in bank.scaled:
        fd = entry["flow"]
        flow = SmoothTestFlow(
            kind=fd["kind"],
            center=tuple(fd["center"]),
            r0=float(fd["r0"]),
            k=int(fd["k"]),
            axis=tuple(fd["axis"]) if "axis" in fd else None,
        )
        results.append(
            scaled_levelset_avoidance(track, float(entry["alpha"]), float(entry["c"]), flow)
        )
    return results


def _probe(cfg: RunConfig, track: SpacetimeTrack) -> dict:
    n = cfg.diagnostics.probe_samples
    ts = np.linspace(float(track.times[0]), float(track.times[-1]), n + 2)[1:-1]
    return countable_times_probe(track, ts)


def _write_report(out: str, payload: dict) -> None:
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _read_report(out: str) -> dict:
    path = os.path.join(out, "report.json")
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def _load_tracks(out: str) -> list[SpacetimeTrack]:
    tracks = []
    lv = 0
    while os.path.isdir(_level_dir(out, lv)):
        tracks.append(SpacetimeTrack.from_dir(_level_dir(out, lv)))
        lv += 1
    if not tracks:
        raise LevelFlowError(f"no level directories under {out}")
    return tracks


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out = cfg.out or os.path.join("artifacts", cfg.name)
    os.makedirs(out, exist_ok=True)

    tracks = _run_levels(cfg, out)
    pairs = None
    if cfg.diagnostics.fattening or cfg.diagnostics.discrepancy:
        pairs = _flow_pairs(cfg, out)
    report = _diagnose(cfg, tracks, pairs)
    certs = _certify(cfg, tracks[-1])
    probe = _probe(cfg, tracks[-1])

    payload = {
        "levelflow_version": __version__,
        "config_hash": cfg.config_hash,
        "name": cfg.name,
        "seed": cfg.seed,
        "grid": {"dim": cfg.dim, "counts": cfg.counts, "extent": cfg.extent, "levels": cfg.levels},
        "shape": {"kind": cfg.shape.kind, "params": cfg.shape.params,
                  "inside_positive": cfg.shape.inside_positive},
        "diagnostics": report.to_dict(),
        "ordering_invariant_ok": report.check_ordering(tracks[-1].snapshot_interval()),
        "certificates": [c.to_dict() for c in certs],
        "countable_times_probe": probe,
    }
    _write_report(out, payload)
    print(f"artifacts written to {out}")
    for c in certs:
        print(f"  certificate {c.name}: {c.verdict}")
    return 0 if all(c.passed for c in certs) else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    if cfg.sweep is None:
        raise ConfigError("config has no [sweep] section", "sweep")
    out = cfg.out or os.path.join("artifacts", cfg.name)
    os.makedirs(out, exist_ok=True)
    s_values = [float(s) for s in cfg.sweep["s_values"]]
    t_end = float(cfg.sweep.get("t_end", cfg.t_end))

    def one_level(lv):
        return level_sweep(
            cfg.shape, s_values, t_end, cfg.grid_for_level(lv), cfg.evolve_config_for_level(lv)
        )

    levels = list(range(cfg.levels))
    if cfg.threads > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            tables = [f.result() for f in [pool.submit(one_level, lv) for lv in levels]]
    else:
        tables = [one_level(lv) for lv in levels]

    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t_disc", "level"])
        for lv, rows in zip(levels, tables):
            for row in rows:
                w.writerow([repr(row["s"]), "" if row["t_disc"] is None else repr(row["t_disc"]), lv])
    print(f"sweep table written to {path}")
    return 0


def cmd_export_contours(args) -> int:
    out = args.artifacts
    tracks = _load_tracks(out)
    lv = args.level if args.level is not None else len(tracks) - 1
    track = tracks[lv]
    times = [float(t) for t in args.times]
    cdir = os.path.join(out, "contours")
    os.makedirs(cdir, exist_ok=True)
    for t in times:
        k = track.nearest_index(t)
        f = track.field(k)
        tag = f"t{f.time:.6f}".replace(".", "_")
        write_contour_file(os.path.join(cdir, f"contour_{tag}.txt"), f)
        write_cell_set(
            os.path.join(cdir, f"cells_outer_{tag}.txt"),
            boundary_slice(track, float(track.times[k]), "outer"),
            f.time,
            "outer",
        )
        write_cell_set(
            os.path.join(cdir, f"cells_inner_{tag}.txt"),
            boundary_slice(track, float(track.times[k]), "inner"),
            f.time,
            "inner",
        )
    print(f"contours written to {cdir}")
    return 0


def cmd_classify(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out = args.artifacts
    tracks = _load_tracks(out)
    pairs = None
    if cfg.diagnostics.fattening or cfg.diagnostics.discrepancy:
        pairs = []
        for lv in range(len(tracks)):
            po = os.path.join(out, f"level{lv}", "pair_outer")
            pi = os.path.join(out, f"level{lv}", "pair_inner")
            if os.path.isdir(po) and os.path.isdir(pi):
                pairs.append((SpacetimeTrack.from_dir(po), SpacetimeTrack.from_dir(pi)))
        pairs = pairs or None
    report = _diagnose(cfg, tracks, pairs)
    payload = _read_report(out)
    payload["diagnostics"] = report.to_dict()
    payload["ordering_invariant_ok"] = report.check_ordering(tracks[-1].snapshot_interval())
    _write_report(out, payload)
    print(f"diagnostics updated in {out}/report.json")
    return 0


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out = args.artifacts
    tracks = _load_tracks(out)
    certs = _certify(cfg, tracks[-1])
    payload = _read_report(out)
    payload["certificates"] = [c.to_dict() for c in certs]
    _write_report(out, payload)
    for c in certs:
        print(f"  certificate {c.name}: {c.verdict}")
    return 0 if all(c.passed for c in certs) else 1


def _apply_overrides(cfg: RunConfig, args) -> None:
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "level", None) is not None and args.cmd in ("run", "sweep"):
        cfg.levels = args.level + 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levelflow", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, config=True, artifacts=False):
        if config:
            sp.add_argument("--config", required=True, help="scenario TOML file")
        if artifacts:
            sp.add_argument("--artifacts", required=True, help="existing artifact directory")
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--level", type=int, help="grid level selector")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--seed", type=int, help="seed override")

    common(sub.add_parser("run", help="evolve, diagnose, certify"))
    common(sub.add_parser("sweep", help="level-family sweep"))
    sp = sub.add_parser("export-contours", help="extract zero-set geometry")
    common(sp, config=False, artifacts=True)
    sp.add_argument("--times", nargs="+", required=True, help="times to export")
    sp = sub.add_parser("classify", help="re-run singularity analysis")
    common(sp, artifacts=True)
    sp = sub.add_parser("certify", help="re-run the certificate bank")
    common(sp, artifacts=True)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "export-contours": cmd_export_contours,
        "classify": cmd_classify,
        "certify": cmd_certify,
    }
    try:
        return handlers[args.cmd](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except LevelFlowError as e:
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

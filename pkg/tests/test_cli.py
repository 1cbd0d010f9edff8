import json
import os
import subprocess
import sys

import numpy as np
import pytest

from levelflow.cli import main
from levelflow.contours import read_contour_file

CIRCLE_CONFIG = """
[run]
name = "mini_circle"
seed = 0

[grid]
dim = 2
counts = 64
extent = 2.0
levels = 2

[shape]
kind = "ball"
radius = 0.5
center = [0.0, 0.0]

[time]
t_end = 0.2
snapshot_every = 20

[certificates]
residual_levels = []

[[certificates.avoidance]]
kind = "shrinking_sphere"
center = [0.0, 0.0]
r0 = 0.2
k = 1

[[certificates.scaled]]
alpha = 1.0
c = 0.05
flow = { kind = "shrinking_sphere", center = [0.0, 0.0], r0 = 0.8, k = 1 }
"""


@pytest.fixture(scope="module")
def circle_artifacts(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = tmp / "circle.toml"
    cfg.write_text(CIRCLE_CONFIG)
    out = tmp / "artifacts"
    code = main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    return cfg, out


def test_run_artifacts_layout(circle_artifacts):
    _, out = circle_artifacts
    assert (out / "report.json").exists()
    for lv in (0, 1):
        assert (out / f"level{lv}" / "series.csv").exists()
        assert (out / f"level{lv}" / "meta.json").exists()
        snaps = os.listdir(out / f"level{lv}" / "snapshots")
        assert snaps


def test_run_report_contents(circle_artifacts):
    _, out = circle_artifacts
    rep = json.loads((out / "report.json").read_text())
    d = rep["diagnostics"]
    assert abs(d["extinction_time"] - 0.125) / 0.125 < 0.03
    assert d["t_fat"]["estimate"] is None
    assert d["t_disc"]["estimate"] is None
    assert rep["ordering_invariant_ok"]
    assert len(d["singular_events"]) == 1
    assert d["singular_events"][0]["classification"] == "mean_convex_type"
    assert all(c["verdict"] == "PASS" for c in rep["certificates"])
    assert rep["config_hash"]


def test_series_csv_schema_and_extinction(circle_artifacts):
    import csv as csvmod

    _, out = circle_artifacts
    with open(out / "level1" / "series.csv") as fh:
        rows = list(csvmod.reader(fh))
    assert rows[0] == [
        "t",
        "min_u",
        "max_u",
        "interface_cell_count",
        "max_abs_A",
        "outer_inner_hausdorff_h_units",
        "fat_band_inradius_h_units",
        "clip_count",
    ]
    assert int(rows[-1][3]) == 0  # extinct at the last snapshot
    t_last = float(rows[-1][0])
    assert abs(t_last - 0.125) < 0.01


def test_rerun_is_byte_identical(circle_artifacts, tmp_path):
    cfg, out = circle_artifacts
    out2 = tmp_path / "again"
    assert main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    a = (out / "report.json").read_bytes()
    b = (out2 / "report.json").read_bytes()
    assert a == b
    for lv in (0, 1):
        sa = (out / f"level{lv}" / "series.csv").read_bytes()
        sb = (out2 / f"level{lv}" / "series.csv").read_bytes()
        assert sa == sb


def test_export_contours(circle_artifacts):
    _, out = circle_artifacts
    rep = json.loads((out / "report.json").read_text())
    t_ext = rep["diagnostics"]["extinction_time"]
    code = main(["export-contours", "--artifacts", str(out), "--times", "0.0", repr(t_ext)])
    assert code == 0
    # out-of-range times are a TimeOutOfRange runtime error
    assert main(["export-contours", "--artifacts", str(out), "--times", "9.9"]) == 3
    cdir = out / "contours"
    files = sorted(os.listdir(cdir))
    contour_files = [f for f in files if f.startswith("contour_")]
    assert len(contour_files) == 2
    # t = 0: a closed polyline with vertex radii 0.5 +- h
    t, dim, verts, elems = read_contour_file(cdir / contour_files[0])
    assert dim == 2 and len(verts) > 30
    radii = np.linalg.norm(verts, axis=1)
    assert np.all(np.abs(radii - 0.5) < 2 / 128)
    # past extinction: valid header, no geometry
    t2, _, verts2, elems2 = read_contour_file(cdir / contour_files[1])
    assert len(verts2) == 0 and len(elems2) == 0
    assert any(f.startswith("cells_outer") for f in files)
    assert any(f.startswith("cells_inner") for f in files)


def test_certify_and_classify_rerun(circle_artifacts):
    cfg, out = circle_artifacts
    assert main(["certify", "--config", str(cfg), "--artifacts", str(out)]) == 0
    assert main(["classify", "--config", str(cfg), "--artifacts", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["certificates"]
    assert rep["diagnostics"]["singular_events"]


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[shape]\nkind = 'nonsense'\n[time]\nt_end = 0.1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    missing = tmp_path / "missing.toml"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2
    noshape = tmp_path / "noshape.toml"
    noshape.write_text("[time]\nt_end = 0.1\n")
    assert main(["run", "--config", str(noshape), "--out", str(tmp_path / "o")]) == 2


def test_runtime_error_exit_code(tmp_path):
    cfg = tmp_path / "oob.toml"
    cfg.write_text(
        """
[shape]
kind = "ball"
radius = 0.99
center = [0.0, 0.0]
[grid]
counts = 64
[time]
t_end = 0.05
"""
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_sweep_csv(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(
        """
[run]
name = "mini_sweep"
[grid]
dim = 2
counts = 48
extent = 2.0
levels = 1
[shape]
kind = "sublevel_of_function"
expression = "hypot(x,y)"
[time]
t_end = 0.01
snapshot_every = 10
[sweep]
s_values = [0.3, 0.5, 0.7]
"""
    )
    out = tmp_path / "sweepout"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "s,t_disc,level"
    assert len(lines) == 4
    for line in lines[1:]:
        s, t_disc, level = line.split(",")
        assert t_disc == ""  # concentric circles never split


def test_console_entry_point(circle_artifacts):
    cfg, _ = circle_artifacts
    proc = subprocess.run(
        [sys.executable, "-m", "levelflow.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "export-contours" in proc.stdout

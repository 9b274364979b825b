"""Figure tests drive a small real trace produced by the simulator CLI.

The figures package itself never imports the simulator; the fixture shells
out to it, mirroring how the two components meet in practice (files only).
"""

import json
import os
import subprocess
import sys

import pytest

from modscat_figures.plots import FIGURE_KINDS, FigureError, render

TRACE_CFG = """
equation = power
d = 2
n = 64
L = 48.0
epsilon = 0.4
data_width = 2.5
dt = 0.1
t_end = 8.0
guard_limit = 1e-4
analysis_log_spacing = 0.2
"""


@pytest.fixture(scope="session")
def trace_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("trace")
    cfg = root / "scenario.cfg"
    out = root / "run"
    cfg.write_text(TRACE_CFG + f"out_dir = {out}\n")
    res = subprocess.run(
        [sys.executable, "-m", "modscat.harness.cli", "run", "--config", str(cfg)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    return str(out)


@pytest.mark.parametrize("kind", FIGURE_KINDS)
def test_kinds_render_and_are_deterministic(kind, trace_dir, tmp_path):
    a = tmp_path / f"{kind}_a.png"
    b = tmp_path / f"{kind}_b.png"
    render(trace_dir, kind, str(a))
    render(trace_dir, kind, str(b))
    assert a.read_bytes() == b.read_bytes()
    assert a.stat().st_size > 1000


def test_annotated_numbers_match_report_cli(trace_dir, tmp_path):
    out = tmp_path / "decay.png"
    values = render(trace_dir, "decay", str(out))
    sidecar = json.loads((tmp_path / "decay.png.values.json").read_text())
    assert sidecar["decay_slope"] == values["decay_slope"]
    rep = subprocess.run(
        [sys.executable, "-m", "modscat.harness.cli", "report", "--trace", trace_dir],
        capture_output=True, text=True,
    )
    assert rep.returncode == 0
    line = next(l for l in rep.stdout.splitlines() if l.startswith("decay_slope"))
    printed = line.split()[1]
    assert printed == "%.17g" % values["decay_slope"]

    gv = render(trace_dir, "growth", str(tmp_path / "growth.png"))
    gline = next(l for l in rep.stdout.splitlines() if l.startswith("growth_slope"))
    assert gline.split()[1] == "%.17g" % gv["growth_slope"]

    rv = render(trace_dir, "remainder", str(tmp_path / "rem.png"))
    rline = next(
        (l for l in rep.stdout.splitlines() if l.startswith("residual_exponent")), None
    )
    if rv["residual_exponent"] is not None:
        assert rline is not None
        assert rline.split()[1] == "%.17g" % rv["residual_exponent"]


def test_phase_drift_panels_match_profile(trace_dir, tmp_path):
    out = tmp_path / "phase.png"
    values = render(trace_dir, "phase_drift", str(out))
    prof = json.loads(open(os.path.join(trace_dir, "profile.json")).read())
    assert len(values["panels"]) >= 1
    # the fitted slope annotated on each panel appears in profile.json verbatim
    flat = prof["phase_slope"]
    pool = {round(v, 12) for row in flat for v in (row if isinstance(row, list) else [row])}
    for panel in values["panels"]:
        assert round(panel["fitted_slope"], 12) in pool


def test_overlay_series(trace_dir, tmp_path):
    out = tmp_path / "overlay.png"
    render(trace_dir, "decay", str(out), overlays=[trace_dir])
    assert out.stat().st_size > 1000


def test_empty_trace_errors(tmp_path):
    with pytest.raises(FigureError):
        render(str(tmp_path), "decay", str(tmp_path / "x.png"))


def test_missing_profile_errors(trace_dir, tmp_path):
    import shutil

    clone = tmp_path / "clone"
    shutil.copytree(trace_dir, clone)
    os.remove(clone / "profile.json")
    with pytest.raises(FigureError):
        render(str(clone), "profile_convergence", str(tmp_path / "x.png"))


def test_figures_package_does_not_import_simulator():
    # file-contract-only coupling: rendering must work without the simulator
    res = subprocess.run(
        [sys.executable, "-c",
         "import sys; sys.modules['modscat'] = None; "
         "import modscat_figures.plots; "
         "assert not any(m.split('.')[0] == 'modscat' and v is not None "
         "for m, v in sys.modules.items())"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr

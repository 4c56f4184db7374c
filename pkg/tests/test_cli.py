import json
import os
import subprocess
import sys

import pytest

from plcsafe import cli, layout, monitor
from plcsafe.recon import read_ply

from _util import square


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def _tiny_scene(tmp_path, plcs, obstacles):
    doc = {"name": "tiny",
           "workspace": {"min_x_m": -1, "min_y_m": -2, "max_x_m": 4, "max_y_m": 2},
           "robots": [{"id": "R1", "vertices_m": square(3.0, 1.2, 0.3)}],
           "plc_count": len(plcs), "grid": {"x_bins": 1, "y_bins": 1, "theta_bins": 1},
           "plcs": plcs, "sensor": {"n_cols": 16, "n_rows": 8, "curtain_thickness_m": 0.01},
           "obstacles": obstacles}
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(doc))
    return path


def _post(oid, x, y, half=0.1):
    return {"id": oid, "footprint_m": square(x, y, half), "z_min_m": 0.0, "z_max_m": 2.0,
            "reflectivity": 1.0, "trajectory": [{"t_s": 0.0, "x_m": 0.0, "y_m": 0.0}]}


def test_instrument_writes_report_and_svg(tmp_path):
    out = tmp_path / "o"
    assert _run("instrument", "--scenario", "three_robots", "--samples", 2000, "--seed", 1,
                "--out", out) == 0
    rep = _load(out / "placement.json")
    assert rep["method"] == "sampling" and rep["samples_evaluated"] == 2000
    assert len(rep["plcs"]) == 2 and rep["total_vertices"] == 12
    svg = (out / "layout.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polygon") == 3
    meta = _load(out / "run_meta.json")
    assert meta["command"] == "instrument" and meta["args"]["seed"] == 1
    assert _load(out / "timing.json")["wall_time_s"] > 0


def test_instrument_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert _run("instrument", "--scenario", "three_robots", "--samples", 3000, "--seed", 4,
                    "--out", out) == 0
        outs.append(out)
    for f in ("placement.json", "layout.svg", "run_meta.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_instrument_staggered_full_coverage(tmp_path):
    out = tmp_path / "o"
    assert _run("instrument", "--scenario", "staggered_six", "--plcs", 2, "--samples",
                100_000, "--seed", 7, "--out", out, "--no-svg") == 0
    assert _load(out / "placement.json")["coverage_percent"] == 100.0
    assert not (out / "layout.svg").exists()


def test_instrument_brute_force(tmp_path):
    sc_path = tmp_path / "small.json"
    sc = layout.load_fixture("small_grid")
    doc = layout.scenario_to_dict(sc)
    doc["grid"] = {"x_bins": 3, "y_bins": 3, "theta_bins": 4}
    sc_path.write_text(json.dumps(doc))
    out = tmp_path / "o"
    assert _run("instrument", "--scenario", sc_path, "--brute-force", "--out", out) == 0
    assert _load(out / "placement.json")["method"] == "brute_force"


def test_instrument_budget_exit(tmp_path, capsys):
    assert _run("instrument", "--scenario", "small_grid", "--brute-force", "--budget", 1000,
                "--out", tmp_path) == cli.EXIT_BUDGET == 3
    assert "error" in capsys.readouterr().err


def test_missing_scenario_exit(tmp_path, capsys):
    assert _run("instrument", "--scenario", tmp_path / "nope.json", "--out", tmp_path) == 2
    assert "nope.json" in capsys.readouterr().err


def test_malformed_scenario_exit(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert _run("simulate", "--scenario", bad, "--out", tmp_path) == 2


def test_simulate_planar(tmp_path):
    out = tmp_path / "o"
    assert _run("simulate", "--scenario", "latency_planar", "--trials", 5, "--seed", 2,
                "--out", out) == 0
    lat = _load(out / "latency.json")
    assert lat["trials"] == 5 and lat["episodes"] == 5
    assert set(lat["median_ms"]) == {monitor.DETECTION, monitor.STOP_ISSUED,
                                     monitor.ROBOT_STOPPED}
    assert (out / "timeline_004.json").exists()
    monitor.EventTimeline.load(out / "timeline.json").check()


def test_simulate_zero_duration(tmp_path):
    out = tmp_path / "o"
    assert _run("simulate", "--scenario", "latency_planar", "--duration", 0, "--out", out) == 0
    assert _load(out / "timeline.json")["events"] == []
    assert _load(out / "latency.json")["median_ms"] is None


def test_simulate_interference_k5_and_profiles(tmp_path):
    out = tmp_path / "o"
    assert _run("simulate", "--scenario", "interference_only", "--duration", 2, "--persistence",
                5, "--profiles", "--out", out) == 0
    assert _load(out / "latency.json")["stop_events"] == 0
    assert len(os.listdir(out / "profiles")) == 48


def test_simulate_rejects_bad_persistence(tmp_path):
    assert _run("simulate", "--scenario", "latency_planar", "--persistence", 0,
                "--out", tmp_path) == 2


def test_reconstruct_single_plc(tmp_path):
    path = _tiny_scene(tmp_path, [{"x_m": 0, "y_m": 0, "theta_rad": 0}],
                       [_post("a", 2.0, 0.0, 0.5)])
    out = tmp_path / "o"
    assert _run("reconstruct", "--scenario", path, "--out", out) == 0
    rep = _load(out / "icp_report.json")
    assert rep["registrations"] == [] and "single PLC" in rep["note"]
    assert len(read_ply(out / "combined.ply")) == rep["points"][0] > 0
    assert (out / "merged_plc0.pgm").read_bytes().startswith(b"P5")


def test_reconstruct_empty_scene_warns(tmp_path, capsys):
    path = _tiny_scene(tmp_path, [{"x_m": 0, "y_m": 0, "theta_rad": 0},
                                  {"x_m": 0, "y_m": 1, "theta_rad": 0}], [])
    out = tmp_path / "o"
    assert _run("reconstruct", "--scenario", path, "--out", out) == 0
    assert "empty" in capsys.readouterr().err
    assert _load(out / "icp_report.json")["combined_points"] == 0


def test_reconstruct_too_few_points_exit(tmp_path):
    path = _tiny_scene(tmp_path, [{"x_m": 0, "y_m": 0, "theta_rad": 0},
                                  {"x_m": 0, "y_m": 0.5, "theta_rad": 0}],
                       [_post("a", 2.0, 0.2)])
    assert _run("reconstruct", "--scenario", path, "--out", tmp_path / "o") == \
        cli.EXIT_POINTS == 4


@pytest.mark.slow
def test_reconstruct_testbed(tmp_path):
    out = tmp_path / "o"
    assert _run("reconstruct", "--scenario", "testbed", "--out", out) == 0
    rep = _load(out / "icp_report.json")
    (reg,) = rep["registrations"]
    assert reg["rmse_m"] <= 2 * layout.load_fixture("testbed").sensor.curtain_thickness


def test_report_command(tmp_path, capsys):
    sim = tmp_path / "sim"
    ins = tmp_path / "ins"
    assert _run("simulate", "--scenario", "latency_planar", "--trials", 3, "--out", sim) == 0
    assert _run("instrument", "--scenario", "three_robots", "--samples", 500, "--out", ins,
                "--no-svg") == 0
    capsys.readouterr()
    out = tmp_path / "rep"
    files = [sim / "timeline.json", sim / "timeline_001.json", sim / "timeline_002.json",
             ins / "placement.json"]
    assert _run("report", *files, "--out", out) == 0
    text = capsys.readouterr().out
    assert "3 timelines, 3 episodes" in text and "coverage" in text
    summary = _load(out / "report.json")
    assert summary["latency"]["episodes"] == 3
    assert _run("report", tmp_path / "missing.json") == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "plcsafe.cli", "instrument", "--scenario",
                          "three_robots", "--samples", "100", "--no-svg", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr

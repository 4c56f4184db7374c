import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcsafe import curtain, geom2d
from plcsafe.curtain import PlcModel
from plcsafe.errors import IndexOutOfRange
from plcsafe.layout import Pose2D

from _util import envelope_check, square

LOCAL = PlcModel()


def test_camera_ray_two_columns():
    plc = PlcModel(n_cols=2, fov=math.pi / 2)
    assert curtain.camera_ray(plc, 0).heading == pytest.approx(-math.pi / 8)
    assert curtain.camera_ray(plc, 1).heading == pytest.approx(math.pi / 8)


def test_camera_ray_middle_column_and_monotone():
    plc = PlcModel(n_cols=9, pose=Pose2D(1.0, 2.0, 0.7))
    assert curtain.camera_ray(plc, 4).heading == pytest.approx(0.7)
    heads = [curtain.camera_ray(plc, c).heading for c in range(9)]
    assert np.all(np.diff(heads) > 0)
    assert curtain.camera_ray(plc, 0).origin == (1.0, 2.0)
    with pytest.raises(IndexOutOfRange):
        curtain.camera_ray(plc, 9)


def test_safety_curtain_front_face():
    pts = np.array(square(5.0, 0.0))
    prof = curtain.design_safety_curtain(pts, LOCAL, 0.1)
    mid = LOCAL.n_cols // 2
    # the two centre columns sit at +-fov/(2 n) off axis
    want = 4.4 / math.cos(0.5 * LOCAL.fov / LOCAL.n_cols)
    assert prof.ranges[mid] == pytest.approx(want, abs=1e-9)
    assert prof.ranges[0] == LOCAL.max_range and prof.ranges[-1] == LOCAL.max_range
    assert prof.kind == curtain.SAFETY and not prof.flags["degenerate"]


@pytest.mark.parametrize("offset", [0.0, -0.1])
def test_safety_curtain_rejects_nonpositive_offset(offset):
    with pytest.raises(ValueError):
        curtain.design_safety_curtain(np.array(square(5, 0)), LOCAL, offset)


def test_collinear_points_fall_back_to_padded_hull():
    pts = np.array([[3.0, -0.5], [3.5, 0.0], [4.0, 0.5]])
    prof = curtain.design_safety_curtain(pts, LOCAL, 0.1)
    assert prof.flags["degenerate"]
    inside, clearance, _ = envelope_check(pts, LOCAL, prof, 0.1)
    assert inside
    assert clearance >= 0.1 - 1e-6


def _random_robot(rng):
    c = rng.uniform([2.0, -1.0], [6.0, 1.0])
    return c + rng.normal(scale=0.35, size=(rng.integers(4, 20), 2))


def test_envelope_property_random_clouds():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(300):
        pts = _random_robot(rng)
        if np.any(np.abs(np.arctan2(pts[:, 1], pts[:, 0])) > 0.4 * LOCAL.fov):
            continue
        prof = curtain.design_safety_curtain(pts, LOCAL, 0.1)
        inside, clearance, bound = envelope_check(pts, LOCAL, prof, 0.1)
        assert inside
        assert 0.1 - 1e-6 <= clearance <= 0.1 + bound
        # no control point inside the un-offset hull
        hit = prof.flags["hit"]
        ctrl = LOCAL.column_points(prof.ranges, world=False)[hit]
        assert not np.any(geom2d.contains(prof.flags["hull"], ctrl))
        checked += 1
    assert checked > 200


def test_tracking_rederived_curtain_encloses_moved_points():
    rng = np.random.default_rng(1)
    pts = _random_robot(rng)
    for _ in range(30):
        pts = pts + rng.normal(scale=0.05, size=pts.shape)
        prof = curtain.design_safety_curtain(pts, LOCAL, 0.1)
        assert envelope_check(pts, LOCAL, prof, 0.1)[0]


def test_group_curtain_takes_nearest_shell():
    a, b = np.array(square(4.0, 0.0)), np.array(square(7.0, 0.0))
    group = curtain.design_group_curtain([a, b], LOCAL, 0.1)
    single = curtain.design_safety_curtain(a, LOCAL, 0.1)
    assert np.array_equal(group.ranges, single.ranges)


def test_planar_curtain_examples():
    plc = PlcModel(n_cols=3, fov=math.pi / 2 * 3 / 2)
    # column bearings are -pi/4, 0, +pi/4
    prof = curtain.planar_curtain(3.0, plc)
    assert prof.ranges == pytest.approx([3 * math.sqrt(2), 3.0, 3 * math.sqrt(2)])
    assert prof.kind == curtain.PLANAR


def test_planar_curtain_clamps_edges():
    plc = PlcModel(fov=math.pi * 0.9, max_range=10.0)
    prof = curtain.planar_curtain(10.0, plc)
    assert prof.ranges[0] == 10.0 and prof.ranges[-1] == 10.0
    b = plc.local_bearings()
    free = prof.ranges < 10.0
    assert np.allclose(prof.ranges[free] * np.cos(b[free]), 10.0, atol=1e-9)
    with pytest.raises(ValueError):
        curtain.planar_curtain(0.0, plc)


@given(st.floats(0.1, 30.0))
@settings(max_examples=50, deadline=None)
def test_planar_curtain_frontal_plane(depth):
    prof = curtain.planar_curtain(depth, LOCAL)
    b = LOCAL.local_bearings()
    free = prof.ranges < LOCAL.max_range
    assert np.allclose(prof.ranges[free] * np.cos(b[free]), depth, atol=1e-9)


@pytest.mark.parametrize("span,count", [((1.0, 1.05), 6), ((1.0, 1.005), 1), ((0.5, 8.0), 751)])
def test_sweep_schedule_counts(span, count):
    sweep = curtain.sweep_schedule(span[0], span[1], 0.01, LOCAL)
    assert len(sweep) == count
    assert sweep[0].flags["depth"] == span[0]
    assert sweep[-1].flags["depth"] <= span[1] + 1e-12
    assert [p.stamp for p in sweep] == list(range(count))


def test_sweep_schedule_errors():
    with pytest.raises(ValueError):
        curtain.sweep_schedule(2.0, 1.0, 0.01, LOCAL)
    with pytest.raises(ValueError):
        curtain.sweep_schedule(1.0, 2.0, 0.0, LOCAL)


def test_random_curtain_deterministic():
    a = curtain.random_curtain(LOCAL, 42)
    b = curtain.random_curtain(LOCAL, 42)
    assert np.array_equal(a.ranges, b.ranges)
    assert not np.array_equal(a.ranges, curtain.random_curtain(LOCAL, 43).ranges)


def test_random_curtain_zero_slope_is_constant():
    prof = curtain.random_curtain(LOCAL, 3, slope_limit=0.0)
    assert np.all(prof.ranges == prof.ranges[0])


def test_random_curtain_bounds_sweep():
    plc = PlcModel(n_cols=64, max_range=8.0)
    for seed in range(10_000):
        r = curtain.random_curtain(plc, seed, slope_limit=0.3).ranges
        assert r.min() > 0 and r.max() <= 8.0
        assert np.abs(np.diff(r)).max() <= 0.3 + 1e-12


def _tag(kind, n):
    return [curtain.CurtainProfile([1.0, 1.0], kind, i) for i in range(n)]


def _kinds(stream):
    return "".join("S" if p.kind == curtain.SAFETY else "W" for p in stream)


def test_interleave_examples():
    assert _kinds(curtain.interleave(_tag("safety", 3), _tag("planar", 3), 1)) == "SWSWSW"
    out = list(curtain.interleave(_tag("safety", 6), _tag("planar", 2), 3))
    assert _kinds(out) == "SSSWSSSW"
    assert [p.stamp for p in out if p.kind == "planar"] == [0, 1]
    assert _kinds(curtain.interleave(_tag("safety", 4), [], 2)) == "SSSS"
    with pytest.raises(ValueError):
        list(curtain.interleave(_tag("safety", 1), [], 0))


def test_profile_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        curtain.CurtainProfile([1.0, 0.0], "planar")
    with pytest.raises(ValueError):
        curtain.CurtainProfile([1.0, np.inf], "planar")
    prof = curtain.planar_curtain(2.0, PlcModel(n_cols=4))
    path = tmp_path / "p.csv"
    curtain.write_profile_csv(prof, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["col", "range_m"] and len(rows) == 5
    assert float(rows[1][1]) == pytest.approx(prof.ranges[0], abs=1e-6)


def test_curtain_range_at_matches_columns():
    prof = curtain.planar_curtain(3.0, LOCAL)
    b = LOCAL.local_bearings()
    mid = 0.5 * (b[10] + b[11])
    # a planar polyline interpolates the plane exactly
    assert curtain.curtain_range_at(prof, LOCAL, mid)[0] == pytest.approx(3.0 / math.cos(mid))
    assert np.isnan(curtain.curtain_range_at(prof, LOCAL, math.pi)[0])

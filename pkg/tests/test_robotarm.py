import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcsafe import layout, robotarm
from plcsafe.errors import DimensionMismatch
from plcsafe.robotarm import ArmChain, JointState, Link, make_transform

from _util import fk_oracle

Z = (0.0, 0.0, 1.0)


def _planar_two_link():
    links = [Link(Z, make_transform((1, 0, 0))), Link(Z, make_transform((1, 0, 0)))]
    return ArmChain(np.eye(4), links, virtual_points=())


def test_fk_zero_angles():
    pts = robotarm.forward_kinematics(_planar_two_link(), JointState((0.0, 0.0)))
    assert np.allclose(pts, [[1, 0, 0], [2, 0, 0]])


def test_fk_quarter_turn():
    pts = robotarm.forward_kinematics(_planar_two_link(), JointState((math.pi / 2, 0.0)))
    assert np.allclose(pts, [[0, 1, 0], [0, 2, 0]], atol=1e-12)
    pts = robotarm.forward_kinematics(_planar_two_link(), (0.0, math.pi / 2))
    assert np.allclose(pts, [[1, 0, 0], [1, 1, 0]], atol=1e-12)


def test_fk_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        robotarm.forward_kinematics(_planar_two_link(), JointState((0.0,)))


def test_link_rejects_non_rigid_transform():
    bad = np.eye(4)
    bad[0, 0] = 2.0
    with pytest.raises(ValueError):
        Link(Z, bad)
    with pytest.raises(ValueError):
        Link((0, 0, 0), np.eye(4))


def _random_chain(rng, n=6):
    links, raw = [], []
    for _ in range(n):
        axis = rng.normal(size=3)
        tf = make_transform(rng.uniform(-0.4, 0.4, 3), rng.uniform(-np.pi, np.pi, 3))
        links.append(Link(axis, tf))
        raw.append((axis, tf))
    base = make_transform(rng.uniform(-2, 2, 3), (0, 0, rng.uniform(-np.pi, np.pi)))
    return ArmChain(base, links), base, raw


def test_fk_matches_scipy_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        chain, base, raw = _random_chain(rng)
        q = rng.uniform(-np.pi, np.pi, 6)
        got = robotarm.forward_kinematics(chain, q)
        want = fk_oracle(base, raw, q, chain.virtual_points)
        assert np.allclose(got, want, atol=1e-9, rtol=0)


def test_fk_preserves_link_lengths():
    rng = np.random.default_rng(1)
    chain, _, _ = _random_chain(rng)
    ref = robotarm.forward_kinematics(chain, np.zeros(6))
    d_ref = np.linalg.norm(np.diff(ref[:6], axis=0), axis=1)
    for _ in range(50):
        pts = robotarm.forward_kinematics(chain, rng.uniform(-3, 3, 6))
        assert np.allclose(np.linalg.norm(np.diff(pts[:6], axis=0), axis=1), d_ref, atol=1e-12)


def test_default_virtual_points_count_and_midpoints():
    chain = _planar_two_link()
    full = ArmChain(np.eye(4), chain.links)
    assert len(full.virtual_points) == 2 + 4
    pts = robotarm.forward_kinematics(full, (0.3, -0.8))
    joints = np.vstack([[0.0, 0.0, 0.0], pts[:2]])
    mids = 0.5 * (joints[:-1] + joints[1:])
    assert np.allclose(pts[2:4], mids, atol=1e-12)
    # end-effector corners sit 0.05*sqrt(2) from the tool point
    assert np.allclose(np.linalg.norm(pts[4:] - pts[1], axis=1), 0.05 * math.sqrt(2))


def test_virtual_point_bad_link():
    with pytest.raises(ValueError):
        ArmChain(np.eye(4), _planar_two_link().links, virtual_points=((5, (0, 0, 0)),))


def test_project_top_down_examples():
    out = robotarm.project_top_down([[1.0, 2.0, 0.0]], (1.0, 1.0, math.pi / 2))
    assert np.allclose(out, [[1.0, 0.0]], atol=1e-12)
    out = robotarm.project_top_down([[3.0, 0.0, 9.0]], (0.0, 0.0, 0.0))
    assert np.allclose(out, [[3.0, 0.0]])
    with pytest.raises(ValueError):
        robotarm.project_top_down(np.zeros((0, 3)), (0, 0, 0))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi))
@settings(max_examples=60, deadline=None)
def test_project_top_down_preserves_planar_distances(x, y, th):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-3, 3, (5, 3))
    out = robotarm.project_top_down(pts, (x, y, th))
    d_in = np.linalg.norm(pts[:, None, :2] - pts[None, :, :2], axis=2)
    d_out = np.linalg.norm(out[:, None] - out[None], axis=2)
    assert np.allclose(d_in, d_out, atol=1e-9)


def test_sample_trajectory_interpolates_and_clamps():
    script = ((0.0, JointState((0.0, 1.0))), (2.0, JointState((1.0, 3.0))))
    assert robotarm.sample_trajectory(script, 1.0).angles == pytest.approx((0.5, 2.0))
    assert robotarm.sample_trajectory(script, -1.0).angles == (0.0, 1.0)
    assert robotarm.sample_trajectory(script, 5.0).angles == (1.0, 3.0)
    assert robotarm.sample_trajectory(script, 2.0).angles == (1.0, 3.0)
    with pytest.raises(ValueError):
        robotarm.sample_trajectory((), 0.0)


def test_testbed_arms_stay_near_their_bench():
    sc = layout.load_fixture("testbed")
    for arm in sc.arms:
        robot = next(r for r in sc.robots if r.id == arm.robot_id)
        centre = np.mean(robot.vertices, axis=0)
        for t in np.linspace(0.0, 30.0, 61):
            pts = arm.points_at(t)
            assert np.all(np.linalg.norm(pts[:, :2] - centre, axis=1) < 2.0)

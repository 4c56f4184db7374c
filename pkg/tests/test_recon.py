import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from plcsafe import curtain, plcsim, recon
from plcsafe.curtain import PlcModel
from plcsafe.errors import DimensionMismatch, InsufficientPoints
from plcsafe.layout import ObstaclePrism, Pose2D
from plcsafe.recon import IcpParams, PointCloud, RigidTransform3


def _img(intensity, ranges, frame=0):
    return plcsim.IntensityImage(frame, np.asarray(intensity, float), np.asarray(ranges, float))


def _same(a, b):
    return (np.array_equal(a.intensity, b.intensity)
            and np.array_equal(np.nan_to_num(a.range, nan=-1), np.nan_to_num(b.range, nan=-1)))


def test_merge_single_image():
    img = _img([[0.0, 0.7], [0.2, 0.0]], [1.0, 2.0])
    m = recon.merge_max([img])
    assert np.array_equal(m.intensity, img.intensity)
    assert m.range[0, 1] == 2.0 and m.range[1, 0] == 1.0 and np.isnan(m.range[0, 0])


def test_merge_disjoint_union():
    a = _img([[1.0, 0.0]], [1.0, 1.0])
    b = _img([[0.0, 0.5]], [2.0, 2.0])
    m = recon.merge_max([a, b])
    assert m.intensity.tolist() == [[1.0, 0.5]]
    assert m.range.tolist() == [[1.0, 2.0]]


def test_merge_tie_takes_nearest():
    a = _img([[0.8]], [3.0])
    b = _img([[0.8]], [2.0])
    assert recon.merge_max([a, b]).range[0, 0] == 2.0
    assert recon.merge_max([b, a]).range[0, 0] == 2.0


def test_merge_associative_commutative():
    rng = np.random.default_rng(0)
    imgs = [_img(rng.choice([0.0, 0.5, 1.0], size=(6, 5)), rng.uniform(1, 4, 5), k)
            for k in range(6)]
    ref = recon.merge_max(imgs)
    for _ in range(10):
        order = rng.permutation(6)
        shuffled = [imgs[i] for i in order]
        assert _same(recon.merge_max(shuffled), ref)
        left = recon.merge_max(shuffled[:3])
        right = recon.merge_max(shuffled[3:])
        assert _same(recon.merge_max([left, right]), ref)


def test_merge_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        recon.merge_max([_img(np.zeros((2, 2)), [1, 1]), _img(np.zeros((2, 3)), [1, 1, 1])])
    with pytest.raises(ValueError):
        recon.merge_max([])


def test_backproject_center_pixel():
    plc = PlcModel(n_cols=5, n_rows=5, mount_height=1.2, pose=Pose2D(1.0, 1.0, math.pi / 2))
    inten = np.zeros((5, 5))
    inten[2, 2] = 1.0
    m = recon.merge_max([_img(inten, np.full(5, 2.0))])
    cloud = recon.backproject(m, plc)
    assert len(cloud) == 1
    assert cloud.points[0] == pytest.approx([1.0, 3.0, 1.2], abs=1e-12)
    empty = recon.merge_max([_img(np.zeros((5, 5)), np.ones(5))])
    assert len(recon.backproject(empty, plc)) == 0


def test_wall_sweep_recovers_depth():
    plc = PlcModel(n_cols=32, n_rows=16, max_range=8.0, curtain_thickness=0.01)
    wall = ObstaclePrism("wall", ((3.0, -5.0), (3.2, -5.0), (3.2, 5.0), (3.0, 5.0)), -10, 10, 1.0)
    merged = recon.sweep_merge([wall], plc, 2.5, 3.5, 0.01)
    rows, cols = np.nonzero(merged.intensity > 0)
    assert cols.size == plc.n_rows * plc.n_cols
    depth = merged.range[rows, cols] * np.cos(plc.local_bearings()[cols])
    assert np.all(np.abs(depth - 3.0) <= plc.curtain_thickness + 0.005)
    cloud = recon.backproject(merged, plc)
    assert np.all(np.abs(cloud.points[:, 0] - 3.0) <= plc.curtain_thickness + 0.005)


def _structured_cloud(n=3000, seed=0):
    """Points on three bumpy orthogonal patches; constrains all six dof."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, (n, 2))
    bump = 0.1 * np.sin(3 * u[:, 0]) * np.cos(2 * u[:, 1])
    k = n // 3
    a = np.column_stack([u[:k, 0], u[:k, 1], bump[:k]])
    b = np.column_stack([u[k:2 * k, 0], bump[k:2 * k] + 1.0, u[k:2 * k, 1] + 1.0])
    c = np.column_stack([bump[2 * k:] + 1.0, u[2 * k:, 0], u[2 * k:, 1] + 1.0])
    return PointCloud(np.vstack([a, b, c]))


def _random_tf(rng, max_angle, max_shift):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = rng.uniform(0, max_angle)
    shift = rng.normal(size=3)
    shift *= rng.uniform(0, max_shift) / np.linalg.norm(shift)
    return RigidTransform3(Rotation.from_rotvec(axis * ang).as_matrix(), shift)


def test_icp_identity():
    cloud = _structured_cloud()
    res = recon.icp_register(cloud, cloud)
    assert res.rmse == pytest.approx(0.0, abs=1e-12)
    assert res.transform.angle() < 1e-9
    assert np.linalg.norm(res.transform.translation) < 1e-9


def test_icp_recovers_known_transform():
    rng = np.random.default_rng(1)
    target = _structured_cloud(seed=1)
    for _ in range(5):
        truth = _random_tf(rng, math.radians(20), 0.3)
        source = target.transformed(truth.inverse())
        init = _random_tf(rng, math.radians(5), 0.05).compose(truth)
        res = recon.icp_register(source, target, init, IcpParams(max_iter=200))
        err = res.transform.compose(truth.inverse())
        assert np.linalg.norm(err.translation) <= 0.01
        assert math.degrees(err.angle()) <= 0.5


def test_icp_residual_non_increasing():
    rng = np.random.default_rng(2)
    target = _structured_cloud(seed=2)
    source = target.transformed(_random_tf(rng, math.radians(5), 0.05))
    for accel in (False, True):
        res = recon.icp_register(source, target, params=IcpParams(accelerate=accel))
        h = np.array(res.history)
        assert np.all(np.diff(h) <= 1e-12)


def test_icp_insufficient_points():
    small = PointCloud(np.random.default_rng(0).random((50, 3)))
    with pytest.raises(InsufficientPoints):
        recon.icp_register(small, _structured_cloud())


def test_icp_flags_non_convergence():
    rng = np.random.default_rng(3)
    target = _structured_cloud(seed=3)
    source = target.transformed(_random_tf(rng, math.radians(10), 0.2))
    res = recon.icp_register(source, target, params=IcpParams(max_iter=1, accelerate=False))
    assert res.iterations == 1 and not res.converged


def test_rigid_transform_rejects_reflection():
    with pytest.raises(ValueError):
        RigidTransform3(np.diag([1.0, 1.0, -1.0]))
    t = RigidTransform3.from_yaw(0.3, (1, 2, 3))
    assert np.allclose(t.compose(t.inverse()).matrix(), np.eye(4))


def test_filter_cloud():
    empty = PointCloud(np.zeros((0, 3)))
    assert len(recon.filter_cloud(empty)) == 0
    g = np.linspace(0, 1, 20)
    plane = np.array([[x, y, 0.0] for x in g for y in g])
    cloud = PointCloud(np.vstack([plane, [[5.0, 5.0, 5.0]]]))
    out = recon.filter_cloud(cloud)
    assert len(out) == len(plane)
    assert not np.any(np.all(out.points == [5.0, 5.0, 5.0], axis=1))
    same = recon.filter_cloud(cloud, sigma=math.inf)
    assert np.array_equal(same.points, cloud.points)
    near = recon.filter_cloud(cloud, max_range=2.0, sigma=math.inf)
    assert len(near) == len(plane)


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    cloud = PointCloud(rng.uniform(-3, 3, (40, 3)), rng.random(40))
    path = tmp_path / "c.ply"
    recon.write_ply(cloud, path)
    back = recon.read_ply(path)
    assert np.allclose(back.points, cloud.points, atol=1e-6)
    assert np.allclose(back.intensity, cloud.intensity, atol=1e-6)
    recon.write_ply(PointCloud(np.zeros((0, 3))), path)
    assert len(recon.read_ply(path)) == 0

"""Sweep reconstruction: merge swept images, back-project, register with ICP."""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import curtain, plcsim
from .errors import DimensionMismatch, InsufficientPoints


@dataclass(frozen=True, eq=False)
class MergedImage:
    intensity: np.ndarray  # (n_rows, n_cols)
    range: np.ndarray      # (n_rows, n_cols), NaN where intensity is 0

    @property
    def shape(self):
        return self.intensity.shape


def _as_layers(img):
    """(intensity, per-pixel range) of an IntensityImage or MergedImage."""
    if isinstance(img, MergedImage):
        return img.intensity, img.range
    inten = np.asarray(img.intensity, dtype=np.float64)
    rng = np.broadcast_to(np.asarray(img.column_range, dtype=np.float64)[None, :], inten.shape)
    return inten, np.where(inten > 0, rng, np.nan)


def merge_max(images):
    """Per-pixel maximum intensity; the range comes from the frame holding it.

    Ties on intensity go to the nearest range, so the result does not depend
    on the order or grouping of ``images``. Merged images may be merged again.
    """
    images = list(images)
    if not images:
        raise ValueError("merge_max needs at least one image")
    best_i, best_r = _as_layers(images[0])
    best_i = best_i.copy()
    best_r = np.array(best_r, dtype=np.float64)
    for img in images[1:]:
        inten, rng = _as_layers(img)
        if inten.shape != best_i.shape:
            raise DimensionMismatch(f"image shape {inten.shape} differs from {best_i.shape}")
        r_cmp = np.where(np.isnan(rng), np.inf, rng)
        b_cmp = np.where(np.isnan(best_r), np.inf, best_r)
        take = (inten > best_i) | ((inten == best_i) & (inten > 0) & (r_cmp < b_cmp))
        best_i = np.where(take, inten, best_i)
        best_r = np.where(take, rng, best_r)
    best_r = np.where(best_i > 0, best_r, np.nan)
    return MergedImage(best_i, best_r)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray = None
    frame_id: str = "world"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        inten = np.ones(len(pts)) if self.intensity is None else \
            np.asarray(self.intensity, dtype=np.float64).reshape(-1)
        if len(inten) != len(pts):
            raise ValueError("one intensity per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensity", inten)

    def __len__(self):
        return len(self.points)

    def transformed(self, tf):
        return PointCloud(tf.apply(self.points), self.intensity, self.frame_id)

    def subset(self, mask):
        return PointCloud(self.points[mask], self.intensity[mask], self.frame_id)

    @staticmethod
    def concat(clouds, frame_id="world"):
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.zeros((0, 3)), np.zeros(0), frame_id)
        return PointCloud(np.vstack([c.points for c in clouds]),
                          np.concatenate([c.intensity for c in clouds]), frame_id)


def backproject(merged, plc, min_intensity=0.5, frame_id="world"):
    """One world-frame point per pixel whose intensity reaches ``min_intensity``."""
    if not 0.0 < min_intensity <= 1.0:
        raise ValueError("min_intensity must lie in (0, 1]")
    rows, cols = np.nonzero(merged.intensity >= min_intensity)
    h = merged.range[rows, cols]
    b = plc.world_bearings()[cols]
    z = plc.mount_height + h * plc.row_tangents()[rows]
    pts = np.stack([plc.pose.x + h * np.cos(b), plc.pose.y + h * np.sin(b), z], axis=1)
    return PointCloud(pts, merged.intensity[rows, cols], frame_id)


def sweep_images(scene, plc, d_min, d_max, interval, t=0.0):
    """Images of a planar sweep over a static scene, one per curtain."""
    for prof in curtain.sweep_schedule(d_min, d_max, interval, plc):
        yield plcsim.image_curtain(scene, t, plc, prof, frame=prof.stamp)


def sweep_merge(scene, plc, d_min, d_max, interval, t=0.0):
    """Merged image of a full planar sweep, folded frame by frame."""
    merged = None
    for img in sweep_images(scene, plc, d_min, d_max, interval, t):
        merged = merge_max([img] if merged is None else [merged, img])
    return merged


# ---------------------------------------------------------- registration

@dataclass(frozen=True, eq=False)
class RigidTransform3:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(r) - 1.0) > 1e-9 or not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw, translation=(0.0, 0.0, 0.0)):
        c, s = math.cos(yaw), math.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, other):
        """``self`` after ``other``."""
        return RigidTransform3(self.rotation @ other.rotation,
                               self.rotation @ other.translation + self.translation)

    def inverse(self):
        return RigidTransform3(self.rotation.T, -self.rotation.T @ self.translation)

    def angle(self):
        """Rotation angle in radians."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(math.acos(min(1.0, max(-1.0, c))))


def kabsch(src, dst):
    """Least-squares rigid transform mapping ``src`` onto ``dst`` (paired rows)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform3(r, cd - r @ cs)


@dataclass(frozen=True)
class IcpParams:
    max_iter: int = 50
    tol: float = 1e-6
    min_points: int = 100
    max_pair_dist: float = None
    accelerate: bool = True


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: RigidTransform3
    rmse: float
    mean_residual: float
    iterations: int
    converged: bool
    history: tuple = ()


def _pair(tree, pts, max_pair_dist):
    if max_pair_dist is None:
        d, j = tree.query(pts)
        return d, j, np.ones(len(pts), dtype=bool)
    d, j = tree.query(pts, distance_upper_bound=max_pair_dist)
    keep = np.isfinite(d)
    return d, np.where(keep, j, 0), keep


def _objective(d, keep, max_pair_dist):
    """Mean pair distance; rejected pairs count as ``max_pair_dist``."""
    if max_pair_dist is None:
        return float(d.mean())
    return float(np.where(keep, d, max_pair_dist).mean())


def _twist(step, center):
    """Rotation vector and centre displacement of ``step`` about ``center``."""
    w = Rotation.from_matrix(step.rotation).as_rotvec()
    return w, step.apply(center[None])[0] - center


def _scaled_step(w, v, center, alpha):
    r = Rotation.from_rotvec(alpha * w).as_matrix()
    return RigidTransform3(r, center + alpha * v - r @ center)


def icp_register(source, target, init=None, params=None):
    """Point-to-point ICP aligning ``source`` onto ``target``.

    Each iteration pairs every source point with its nearest target point and
    solves the rigid update in closed form (SVD of the cross-covariance).
    With ``params.max_pair_dist`` set, pairs farther apart are left out of the
    update and count as that distance in the mean residual, which keeps the
    stopping rule meaningful for partially overlapping clouds. Iteration
    stops once the mean residual improves by less than ``params.tol``.

    With ``params.accelerate``, consecutive updates pointing the same way are
    extrapolated along that direction (a longer step is kept only if it lowers
    the mean residual). This matters for scenes dominated by large planes,
    where plain updates creep along the planes.

    ``rmse`` is the root-mean-square distance over the kept pairs at the
    returned transform; ``history`` holds it before each update and at the end.
    """
    params = params or IcpParams()
    init = init or RigidTransform3.identity()
    if len(source) < params.min_points or len(target) < params.min_points:
        raise InsufficientPoints(
            f"ICP needs {params.min_points} points per cloud, got {len(source)} and {len(target)}")
    tree = cKDTree(target.points, balanced_tree=False, compact_nodes=False)
    src = source.points
    scale = max(float(np.linalg.norm(src - src.mean(axis=0), axis=1).max()), 1e-12)

    def evaluate(tf):
        d, j, keep = _pair(tree, tf.apply(src), params.max_pair_dist)
        return d, j, keep, _objective(d, keep, params.max_pair_dist)

    tf = init
    d, j, keep, prev = evaluate(tf)
    rms = lambda d, keep: float(np.sqrt(np.mean(d[keep] ** 2))) if keep.any() else math.inf
    history = [rms(d, keep)]
    last_dir = None
    converged = False
    it = 0
    while it < params.max_iter and keep.sum() >= 3:
        moved = tf.apply(src[keep])
        step = kabsch(moved, target.points[j[keep]])
        center = moved.mean(axis=0)
        tf = step.compose(tf)
        it += 1
        d, j, keep, cur = evaluate(tf)
        if params.accelerate:
            w, v = _twist(step, center)
            direction = np.concatenate([w * scale, v])
            norm = np.linalg.norm(direction)
            if last_dir is not None and norm > 0 and direction @ last_dir > 0.95 * norm:
                for alpha in (16.0, 4.0, 1.0):
                    trial = _scaled_step(w, v, tf.apply(center[None])[0], alpha).compose(tf)
                    out = evaluate(trial)
                    if out[3] < cur:
                        tf, (d, j, keep, cur) = trial, out
                        break
            last_dir = direction / norm if norm > 0 else None
        history.append(rms(d, keep))
        if prev - cur < params.tol:
            converged = True
            break
        prev = cur
    mean = float(d[keep].mean()) if keep.any() else math.inf
    return IcpResult(tf, history[-1], mean, it, converged, tuple(history))


DEFAULT_SCHEDULE = (0.5, 0.25, 0.12, 0.06)


def register_coarse_to_fine(source, target, init=None, schedule=DEFAULT_SCHEDULE,
                            params=None):
    """ICP repeated with a shrinking pair-rejection distance.

    A wide first pass tolerates the initial misalignment; later passes drop
    pairs that straddle parts of the scene seen by only one sensor.
    """
    params = params or IcpParams()
    tf = init
    total = 0
    result = None
    for dist in schedule:
        result = icp_register(source, target, tf, replace(params, max_pair_dist=dist))
        tf = result.transform
        total += result.iterations
    return replace(result, iterations=total)


def filter_cloud(cloud, max_range=None, origin=(0.0, 0.0), k=8, sigma=2.0):
    """Drop points beyond ``max_range`` (planar, from ``origin``) and outliers.

    A point is an outlier when its mean distance to its ``k`` nearest
    neighbours exceeds the cloud mean of that statistic by ``sigma`` standard
    deviations.
    """
    keep = np.ones(len(cloud), dtype=bool)
    if len(cloud) == 0:
        return cloud
    if max_range is not None:
        keep &= np.hypot(cloud.points[:, 0] - origin[0],
                         cloud.points[:, 1] - origin[1]) <= max_range
    kept = cloud.subset(keep)
    if len(kept) <= k or not np.isfinite(sigma):
        return kept
    d, _ = cKDTree(kept.points).query(kept.points, k=k + 1)
    score = d[:, 1:].mean(axis=1)
    limit = score.mean() + sigma * score.std()
    return kept.subset(score <= limit)


# ------------------------------------------------------------------- io

def write_ply(cloud, path):
    """ASCII PLY with x y z intensity per vertex."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property float intensity\nend_header\n")
        for (x, y, z), i in zip(cloud.points, cloud.intensity):
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {i:.6f}\n")


def read_ply(path):
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError("not a PLY file")
    n = 0
    end = lines.index("end_header")
    for line in lines[:end]:
        if line.startswith("element vertex"):
            n = int(line.split()[2])
    data = np.array([[float(v) for v in line.split()] for line in lines[end + 1:end + 1 + n]])
    data = data.reshape(n, 4)
    return PointCloud(data[:, :3], data[:, 3])

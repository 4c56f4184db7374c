"""Serial-chain forward kinematics and top-down projection of arm points."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


def rpy_matrix(roll, pitch, yaw):
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about a unit axis."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def make_transform(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)):
    t = np.eye(4)
    t[:3, :3] = rpy_matrix(*rpy)
    t[:3, 3] = xyz
    return t


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Link:
    """One revolute joint followed by a fixed link transform.

    The link frame is ``parent @ Rot(axis, q) @ transform``; its origin is the
    joint position reported by :func:`forward_kinematics`.
    """
    axis: np.ndarray
    transform: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if axis.shape != (3,) or not np.linalg.norm(axis) > 0:
            raise ValueError("joint axis must be a non-zero 3-vector")
        tf = np.asarray(self.transform, dtype=np.float64)
        if tf.shape != (4, 4):
            raise ValueError("link transform must be 4x4")
        _check_rigid(tf)
        object.__setattr__(self, "axis", _frozen(axis / np.linalg.norm(axis)))
        object.__setattr__(self, "transform", _frozen(tf))

    def __eq__(self, other):
        if not isinstance(other, Link):
            return NotImplemented
        return (np.array_equal(self.axis, other.axis)
                and np.array_equal(self.transform, other.transform))


def _check_rigid(tf, tol=1e-9):
    r = tf[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=tol) or abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("transform rotation is not orthonormal")


@dataclass(frozen=True, eq=False)
class ArmChain:
    base: np.ndarray
    links: tuple
    virtual_points: tuple = field(default=None)

    def __post_init__(self):
        base = np.asarray(self.base, dtype=np.float64)
        _check_rigid(base)
        object.__setattr__(self, "base", _frozen(base))
        if len(self.links) < 1:
            raise ValueError("an arm chain needs at least one link")
        object.__setattr__(self, "links", tuple(self.links))
        vps = self.virtual_points
        if vps is None:
            vps = default_virtual_points(self.links)
        checked = []
        for link_index, offset in vps:
            if not 0 <= int(link_index) < len(self.links):
                raise ValueError(f"virtual point refers to missing link {link_index}")
            checked.append((int(link_index), tuple(float(v) for v in offset)))
        object.__setattr__(self, "virtual_points", tuple(checked))

    @property
    def n_links(self):
        return len(self.links)

    def __eq__(self, other):
        if not isinstance(other, ArmChain):
            return NotImplemented
        return (np.array_equal(self.base, other.base) and self.links == other.links
                and self.virtual_points == other.virtual_points)


@dataclass(frozen=True)
class JointState:
    angles: tuple
    timestamp: float = 0.0


def default_virtual_points(links, ee_half_width=0.05):
    """Midpoint of every link plus four corners around the end effector."""
    vps = []
    for i, link in enumerate(links):
        r = link.transform[:3, :3]
        t = link.transform[:3, 3]
        # previous joint origin expressed in this link's frame
        prev = -r.T @ t
        vps.append((i, tuple(0.5 * prev)))
    last = len(links) - 1
    w = ee_half_width
    for dy, dz in ((w, w), (w, -w), (-w, w), (-w, -w)):
        vps.append((last, (0.0, dy, dz)))
    return tuple(vps)


def link_frames(chain, state):
    angles = np.asarray(state.angles if isinstance(state, JointState) else state,
                        dtype=np.float64)
    if angles.shape != (chain.n_links,):
        raise DimensionMismatch(
            f"chain has {chain.n_links} joints, state has {angles.size} angles")
    frames = []
    t = chain.base.copy()
    for link, q in zip(chain.links, angles):
        rot = np.eye(4)
        rot[:3, :3] = axis_angle_matrix(link.axis, q)
        t = t @ rot @ link.transform
        frames.append(t)
    return frames


def forward_kinematics(chain, state):
    """World positions of every joint origin followed by every virtual point."""
    frames = link_frames(chain, state)
    pts = [f[:3, 3] for f in frames]
    for link_index, offset in chain.virtual_points:
        f = frames[link_index]
        pts.append(f[:3, :3] @ np.asarray(offset) + f[:3, 3])
    return np.array(pts)


def project_top_down(points, plc_pose):
    """Drop height and express (x, y) in the PLC's planar frame."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if p.size == 0:
        raise ValueError("no points to project")
    x, y, theta = plc_pose
    c, s = math.cos(theta), math.sin(theta)
    dx = p[:, 0] - x
    dy = p[:, 1] - y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)


def sample_trajectory(script, t):
    """Joint state at time ``t`` by linear interpolation, clamped at the ends.

    ``script`` is a sequence of ``(time_s, JointState)`` with strictly
    increasing times.
    """
    if len(script) == 0:
        raise ValueError("empty trajectory script")
    times = [float(k[0]) for k in script]
    if t <= times[0]:
        return JointState(tuple(script[0][1].angles), t)
    if t >= times[-1]:
        return JointState(tuple(script[-1][1].angles), t)
    i = int(np.searchsorted(times, t, side="right")) - 1
    t0, s0 = script[i]
    t1, s1 = script[i + 1]
    if t == t0:
        return JointState(tuple(s0.angles), t)
    w = (t - t0) / (t1 - t0)
    a0 = np.asarray(s0.angles, dtype=np.float64)
    a1 = np.asarray(s1.angles, dtype=np.float64)
    return JointState(tuple(float(v) for v in a0 + w * (a1 - a0)), t)


@dataclass(frozen=True)
class ArmTrack:
    """An arm chain bound to a robot id with its scripted joint trajectory."""
    robot_id: str
    chain: ArmChain
    script: tuple

    def points_at(self, t):
        return forward_kinematics(self.chain, sample_trajectory(self.script, t))

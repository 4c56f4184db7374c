"""Light-curtain profiles: safety envelopes, planar sweeps, random curtains.

A profile holds one control-point range per camera column. Safety curtains
are designed in the PLC's planar frame (PLC at the origin looking along +x),
which is the frame :func:`plcsafe.robotarm.project_top_down` produces.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geom2d
from .errors import DegenerateInput, IndexOutOfRange
from .layout import Pose2D

SAFETY = "safety"
PLANAR = "planar"
RANDOM = "random"

DEFAULT_OFFSET = 0.10
DEFAULT_SLOPE_LIMIT = 0.5  # meters per column
_DEGENERATE_PAD = 1e-3


@dataclass(frozen=True)
class PlcModel:
    pose: Pose2D = Pose2D(0.0, 0.0, 0.0)
    fov: float = math.pi / 2
    n_cols: int = 512
    n_rows: int = 640
    max_range: float = 30.0
    frame_rate: float = 24.0
    curtain_thickness: float = 0.03
    mount_height: float = 1.0
    vertical_fov: float = math.pi / 2

    def __post_init__(self):
        if self.n_cols < 2:
            raise ValueError("a PLC needs at least two camera columns")
        if not 0.0 < self.fov <= math.pi:
            raise ValueError("fov must lie in (0, pi]")
        if self.frame_rate <= 0 or self.curtain_thickness <= 0:
            raise ValueError("frame rate and curtain thickness must be positive")
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical fov must lie in (0, pi)")

    @classmethod
    def from_scenario(cls, scenario, pose, dynamic=False, **overrides):
        s = scenario.sensor
        kw = dict(pose=pose, fov=s.fov, n_cols=s.n_cols, n_rows=s.n_rows,
                  max_range=s.max_range,
                  frame_rate=s.dynamic_frame_rate if dynamic else s.frame_rate,
                  curtain_thickness=s.curtain_thickness, mount_height=s.mount_height,
                  vertical_fov=s.vertical_fov)
        kw.update(overrides)
        return cls(**kw)

    @property
    def frame_period(self):
        return 1.0 / self.frame_rate

    def local_bearings(self):
        """Column bearings relative to the heading, increasing with column."""
        step = self.fov / self.n_cols
        return -0.5 * self.fov + (np.arange(self.n_cols) + 0.5) * step

    def world_bearings(self):
        return self.pose.theta + self.local_bearings()

    def row_tangents(self):
        """tan of each pixel row's elevation; row 0 looks highest."""
        step = self.vertical_fov / self.n_rows
        return np.tan(0.5 * self.vertical_fov - (np.arange(self.n_rows) + 0.5) * step)

    def column_points(self, ranges, world=True):
        """Planar points at the given per-column ranges."""
        b = self.world_bearings() if world else self.local_bearings()
        r = np.asarray(ranges, dtype=np.float64)
        ox, oy = (self.pose.x, self.pose.y) if world else (0.0, 0.0)
        return np.stack([ox + r * np.cos(b), oy + r * np.sin(b)], axis=1)


@dataclass(frozen=True, eq=False)
class CurtainProfile:
    ranges: np.ndarray
    kind: str
    stamp: int = 0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.array(self.ranges, dtype=np.float64)
        if r.ndim != 1 or not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError("curtain ranges must be finite and positive")
        r.flags.writeable = False
        object.__setattr__(self, "ranges", r)

    def __len__(self):
        return len(self.ranges)

    def restamp(self, stamp):
        return CurtainProfile(self.ranges, self.kind, stamp, dict(self.flags))


def camera_ray(plc, col):
    """World-frame top-down ray of camera column ``col``."""
    if not 0 <= col < plc.n_cols:
        raise IndexOutOfRange(f"column {col} outside [0, {plc.n_cols})")
    bearing = plc.pose.theta - 0.5 * plc.fov + (col + 0.5) * (plc.fov / plc.n_cols)
    return geom2d.Ray2((plc.pose.x, plc.pose.y), bearing)


def _local_rays(plc):
    b = plc.local_bearings()
    dirs = np.stack([np.cos(b), np.sin(b)], axis=1)
    return np.zeros_like(dirs), dirs


def _padded_hull(points):
    """Hull of nearly collinear points, padded into a thin capsule-like box."""
    pts = geom2d.as_points(points)
    center = pts.mean(axis=0)
    u, s, vt = np.linalg.svd(pts - center)
    axis = vt[0]
    normal = np.array([-axis[1], axis[0]])
    proj = (pts - center) @ axis
    lo, hi = proj.min() - _DEGENERATE_PAD, proj.max() + _DEGENERATE_PAD
    return np.array([center + lo * axis - _DEGENERATE_PAD * normal,
                     center + hi * axis - _DEGENERATE_PAD * normal,
                     center + hi * axis + _DEGENERATE_PAD * normal,
                     center + lo * axis + _DEGENERATE_PAD * normal])


def safety_shell(points2d, offset):
    """Offset convex hull around robot points; returns (hull, shell, degenerate)."""
    try:
        hull = geom2d.convex_hull(points2d)
        degenerate = False
    except DegenerateInput:
        hull = _padded_hull(points2d)
        degenerate = True
    return hull, geom2d.offset_convex(hull, offset), degenerate


def shell_ranges(shell, plc):
    """Entry range of every column ray into a local-frame polygon (inf = miss)."""
    origins, dirs = _local_rays(plc)
    return _kernels.ray_entry(origins, dirs, shell)


def design_safety_curtain(points2d, plc, offset=DEFAULT_OFFSET, stamp=0):
    """Curtain hugging the offset hull of robot points given in the PLC frame.

    Columns that miss the shell are parked at ``max_range``.
    """
    if not offset > 0:
        raise ValueError("safety offset must be positive")
    hull, shell, degenerate = safety_shell(points2d, offset)
    t = shell_ranges(shell, plc)
    hit = np.isfinite(t) & (t <= plc.max_range) & (t > 0)
    ranges = np.where(hit, t, plc.max_range)
    return CurtainProfile(ranges, SAFETY, stamp,
                          {"degenerate": degenerate, "hit": hit, "hull": hull, "shell": shell})


def design_group_curtain(point_sets, plc, offset=DEFAULT_OFFSET, stamp=0):
    """One curtain enclosing several robots: per column, the nearest shell."""
    best = np.full(plc.n_cols, np.inf)
    degenerate = False
    shells = []
    for pts in point_sets:
        _, shell, deg = safety_shell(pts, offset)
        degenerate |= deg
        shells.append(shell)
        best = np.minimum(best, shell_ranges(shell, plc))
    hit = np.isfinite(best) & (best <= plc.max_range) & (best > 0)
    return CurtainProfile(np.where(hit, best, plc.max_range), SAFETY, stamp,
                          {"degenerate": degenerate, "hit": hit, "shells": shells})


def planar_curtain(depth, plc, stamp=0):
    """Frontal plane at ``depth`` meters ahead of the PLC."""
    if not 0 < depth <= plc.max_range:
        raise ValueError("planar depth must lie in (0, max_range]")
    r = depth / np.cos(plc.local_bearings())
    r = np.where(r > plc.max_range, plc.max_range, r)
    return CurtainProfile(r, PLANAR, stamp, {"depth": depth})


def sweep_schedule(d_min, d_max, interval, plc):
    if not d_min < d_max:
        raise ValueError("sweep needs d_min < d_max")
    if not interval > 0:
        raise ValueError("sweep interval must be positive")
    count = int(math.floor((d_max - d_min) / interval + 1e-9)) + 1
    return [planar_curtain(d_min + i * interval, plc, stamp=i) for i in range(count)]


def random_curtain(plc, seed, slope_limit=DEFAULT_SLOPE_LIMIT, stamp=0):
    """Random ranges in (0, max_range] with bounded change between columns."""
    rng = np.random.default_rng(seed)
    u = rng.random(plc.n_cols)
    r = np.empty(plc.n_cols)
    r[0] = plc.max_range * (1.0 - u[0])
    for c in range(1, plc.n_cols):
        lo = max(0.0, r[c - 1] - slope_limit)
        hi = min(plc.max_range, r[c - 1] + slope_limit)
        r[c] = hi - u[c] * (hi - lo)
    return CurtainProfile(r, RANDOM, stamp, {"seed": seed, "slope_limit": slope_limit})


def interleave(safety, sweep, k):
    """Yield ``k`` safety curtains, then one sweep curtain, repeatedly."""
    if k < 1:
        raise ValueError("interleave ratio must be >= 1")
    sweep = iter(sweep)
    for i, curtain in enumerate(safety, start=1):
        yield curtain
        if i % k == 0:
            extra = next(sweep, None)
            if extra is not None:
                yield extra


def curtain_range_at(profile, plc, bearings):
    """Range of the control polyline along local bearings (linear in-between)."""
    pts = plc.column_points(profile.ranges, world=False)
    b = np.atleast_1d(np.asarray(bearings, dtype=np.float64))
    cb = plc.local_bearings()
    out = np.full(b.shape, np.nan)
    j = np.searchsorted(cb, b) - 1
    inside = (j >= 0) & (j < len(cb) - 1)
    for i in np.flatnonzero(inside):
        p, q = pts[j[i]], pts[j[i] + 1]
        d = np.array([math.cos(b[i]), math.sin(b[i])])
        e = q - p
        denom = d[0] * e[1] - d[1] * e[0]
        if denom == 0:
            continue
        out[i] = (p[0] * e[1] - p[1] * e[0]) / denom
    return out


def write_profile_csv(profile, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["col", "range_m"])
        for c, r in enumerate(profile.ranges):
            w.writerow([c, f"{r:.6f}"])

"""Simulated PLC returns: curtain imaging, interference bursts, laser watchdog.

Laser and camera share the PLC origin in the top-down plane. A pixel lights
up when the nearest surface along its ray sits within the curtain thickness
of the column's control point. Rows follow a pinhole model about the mount
height, so a surface at horizontal range ``h`` is seen by row ``r`` at height
``mount_height + h * tan(elevation_r)``.
"""
import csv
import math
import re
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .layout import InterferenceModel, ObstaclePrism, Pose2D, Scenario

HEALTHY = "healthy"
MIRROR_FAULT = "mirror_fault"
POWER_FAULT = "power_fault"


@dataclass(frozen=True, eq=False)
class IntensityImage:
    frame: int
    intensity: np.ndarray   # (n_rows, n_cols) in [0, 1]
    column_range: np.ndarray  # (n_cols,) meters

    @property
    def width(self):
        return self.intensity.shape[1]

    @property
    def height(self):
        return self.intensity.shape[0]


def scene_obstacles(scene):
    if isinstance(scene, Scenario):
        return tuple(scene.obstacles)
    return tuple(scene)


def _world_rays(plc):
    b = plc.world_bearings()
    dirs = np.stack([np.cos(b), np.sin(b)], axis=1)
    origins = np.broadcast_to(np.array([plc.pose.x, plc.pose.y]), dirs.shape)
    return origins, dirs


def obstacle_entries(obstacles, t, plc, column_times=None):
    """(O, n_cols) horizontal entry range of every column ray into every prism."""
    origins, dirs = _world_rays(plc)
    out = np.full((len(obstacles), plc.n_cols), np.inf)
    for i, ob in enumerate(obstacles):
        if column_times is None or ob.is_static:
            poly = ob.footprint_at(t)
        else:
            poses = ob.poses_at(column_times)
            local = np.asarray(ob.footprint)
            c = np.cos(poses[:, 2])[:, None]
            s = np.sin(poses[:, 2])[:, None]
            poly = np.stack([poses[:, 0:1] + c * local[None, :, 0] - s * local[None, :, 1],
                             poses[:, 1:2] + s * local[None, :, 0] + c * local[None, :, 1]],
                            axis=2)
        out[i] = _kernels.ray_entry(origins, dirs, poly)
    return out


def image_curtain(scene, t, plc, profile, frame=0, gain=1.0, falloff=False,
                  column_times=None):
    """Render the intensity image of one curtain.

    ``column_times`` (optional, per column) samples moving obstacles at each
    column's exposure instant, modelling the rolling shutter.
    """
    if len(profile) != plc.n_cols:
        raise ValueError("profile length does not match the PLC's column count")
    obstacles = scene_obstacles(scene)
    ctrl = np.asarray(profile.ranges)
    image = np.zeros((plc.n_rows, plc.n_cols))
    if not obstacles:
        return IntensityImage(frame, image, ctrl.copy())
    h = obstacle_entries(obstacles, t, plc, column_times)          # (O, C)
    # only columns with some surface inside the band can light up
    cols = np.flatnonzero((np.abs(h - ctrl[None, :]) <= plc.curtain_thickness).any(axis=0))
    if cols.size == 0:
        return IntensityImage(frame, image, ctrl.copy())
    h = h[:, cols]
    tan_r = plc.row_tangents()                                      # (R,)
    finite = np.isfinite(h)
    hf = np.where(finite, h, 0.0)
    z = plc.mount_height + hf[:, None, :] * tan_r[None, :, None]   # (O, R, c)
    zmin = np.array([o.z_min for o in obstacles])[:, None, None]
    zmax = np.array([o.z_max for o in obstacles])[:, None, None]
    visible = finite[:, None, :] & (z >= zmin) & (z <= zmax)
    dist = np.where(visible, h[:, None, :], np.inf)
    which = np.argmin(dist, axis=0)                                 # (R, c)
    near = np.take_along_axis(dist, which[None], axis=0)[0]
    lit = np.abs(near - ctrl[None, cols]) <= plc.curtain_thickness
    refl = np.array([o.reflectivity for o in obstacles])[which]
    value = gain * refl
    if falloff:
        value = value / np.maximum(near, 1.0) ** 2
    image[:, cols] = np.where(lit, np.clip(value, 0.0, 1.0), 0.0)
    return IntensityImage(frame, image, ctrl.copy())


def contact_columns(scene, t, plc, profile):
    """Columns whose nearest visible surface lies on the curtain at time ``t``.

    A row-free version of :func:`image_curtain` used for ground truth: a
    prism counts as visible in a column when its height span overlaps the
    vertical field of view at the hit range.
    """
    obstacles = scene_obstacles(scene)
    ctrl = np.asarray(profile.ranges)
    if not obstacles:
        return np.zeros(plc.n_cols, dtype=bool)
    h = obstacle_entries(obstacles, t, plc)
    tan_r = plc.row_tangents()
    finite = np.isfinite(h)
    hf = np.where(finite, h, 0.0)
    lo = plc.mount_height + hf * tan_r.min()
    hi = plc.mount_height + hf * tan_r.max()
    zmin = np.array([o.z_min for o in obstacles])[:, None]
    zmax = np.array([o.z_max for o in obstacles])[:, None]
    visible = finite & (hi >= zmin) & (lo <= zmax)
    near = np.where(visible, h, np.inf).min(axis=0)
    return np.abs(near - ctrl) <= plc.curtain_thickness


def contact_series(obstacle, times, plc, profile):
    """(T, n_cols) contact mask of one obstacle at each of ``times``.

    Same rule as :func:`contact_columns`, evaluated for a batch of instants
    in one ray-casting pass.
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    ctrl = np.asarray(profile.ranges)
    n_t, n_c = times.size, plc.n_cols
    if n_t == 0:
        return np.zeros((0, n_c), dtype=bool)
    poses = obstacle.poses_at(times)
    local = np.asarray(obstacle.footprint)
    c = np.cos(poses[:, 2])[:, None]
    s = np.sin(poses[:, 2])[:, None]
    poly = np.stack([poses[:, 0:1] + c * local[None, :, 0] - s * local[None, :, 1],
                     poses[:, 1:2] + s * local[None, :, 0] + c * local[None, :, 1]], axis=2)
    origins, dirs = _world_rays(plc)
    polys = np.repeat(poly, n_c, axis=0)
    h = _kernels.ray_entry(np.tile(origins, (n_t, 1)), np.tile(dirs, (n_t, 1)),
                           polys).reshape(n_t, n_c)
    tan_r = plc.row_tangents()
    finite = np.isfinite(h)
    hf = np.where(finite, h, 0.0)
    lo = plc.mount_height + hf * tan_r.min()
    hi = plc.mount_height + hf * tan_r.max()
    visible = finite & (hi >= obstacle.z_min) & (lo <= obstacle.z_max)
    return visible & (np.abs(np.where(visible, h, np.inf) - ctrl[None, :]) <= plc.curtain_thickness)


class InterferenceInjector:
    """Online form of :func:`inject_interference`: feed frames one at a time.

    At most one burst is active at a time and consecutive bursts are separated
    by at least one clean frame, so a burst never looks longer than its
    configured length.
    """

    def __init__(self, model):
        self.model = model
        self.rng = np.random.default_rng(model.seed)
        self.forced = set(model.forced_starts)
        self.k = 0
        self.remaining = 0
        self.cooldown = False
        self.span = None

    def apply(self, img):
        lo, hi = self.model.length_range
        draw = self.rng.random()
        if self.remaining == 0 and not self.cooldown and \
                (self.k in self.forced or draw < self.model.burst_probability):
            self.remaining = int(self.rng.integers(lo, hi + 1))
            width = min(self.model.burst_columns, img.width)
            c0 = int(self.rng.integers(0, img.width - width + 1))
            self.span = slice(c0, c0 + width)
        self.k += 1
        self.cooldown = False
        if self.remaining == 0:
            return img
        out = img.intensity.copy()
        out[:, self.span] = 1.0
        self.remaining -= 1
        self.cooldown = self.remaining == 0
        return IntensityImage(img.frame, out, img.column_range)


def inject_interference(images, model):
    """Overlay saturated column bursts lasting 2-4 frames on an image stream."""
    injector = InterferenceInjector(model)
    for img in images:
        yield injector.apply(img)


def watchdog_check(plc, reference_range, image, columns=None, expected=1.0, band=0.25,
                   absent_level=0.05):
    """Compare the reference sheet's return against its expected intensity.

    ``columns`` selects the columns that see the reference sheet (all by
    default). Returns ``healthy``, ``mirror_fault`` (no return at all) or
    ``power_fault`` (return present but outside ``expected * (1 +/- band)``).
    """
    cols = np.arange(image.width) if columns is None else np.asarray(columns)
    ref = image.intensity[:, cols]
    per_col = ref.max(axis=0)
    if per_col.max(initial=0.0) < absent_level * expected or \
            np.mean(per_col >= absent_level * expected) < 0.5:
        return MIRROR_FAULT
    level = float(np.median(per_col[per_col >= absent_level * expected]))
    if abs(level - expected) > band * expected:
        return POWER_FAULT
    return HEALTHY


def reference_sheet(plc, reference_range, width=None, z_span=None, reflectivity=1.0):
    """A thin frontal prism standing at ``reference_range`` across the view."""
    half = width / 2 if width else reference_range * math.tan(plc.fov / 2) * 1.2
    zlo, zhi = z_span if z_span else (-100.0, 100.0)
    depth = 0.005
    local = ((reference_range, -half), (reference_range + depth, -half),
             (reference_range + depth, half), (reference_range, half))
    pose = Pose2D(plc.pose.x, plc.pose.y, plc.pose.theta)
    return ObstaclePrism("reference_sheet", local, zlo, zhi, reflectivity, ((0.0, pose),))


def write_pgm(image, path):
    """8-bit binary PGM of an intensity array in [0, 1]."""
    data = image.intensity if hasattr(image, "intensity") else np.asarray(image)
    px = np.clip(np.rint(np.asarray(data) * 255.0), 0, 255).astype(np.uint8)
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    data = np.frombuffer(raw[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(np.float64) / maxval


def write_range_csv(column_range, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["col", "range_m"])
        for c, r in enumerate(np.asarray(column_range)):
            w.writerow([c, f"{r:.6f}"])


__all__ = ["IntensityImage", "InterferenceModel", "image_curtain", "contact_columns",
           "contact_series", "inject_interference", "InterferenceInjector", "watchdog_check", "reference_sheet", "write_pgm",
           "read_pgm", "write_range_csv", "HEALTHY", "MIRROR_FAULT", "POWER_FAULT"]

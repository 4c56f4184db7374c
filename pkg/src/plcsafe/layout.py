"""Scenario data model and its JSON file format.

All lengths are meters, angles radians and times seconds; field names in the
file carry the unit (``x_m``, ``theta_rad``, ``t_s``).
"""
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema
import numpy as np

from . import geom2d
from .errors import DegenerateInput, IndexOutOfRange, ParseError, ValidationError
from .robotarm import ArmChain, ArmTrack, JointState, Link, make_transform

TWO_PI = 2.0 * math.pi


def normalize_heading(theta):
    t = math.fmod(float(theta), TWO_PI)
    if t < 0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose {name} must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_heading(self.theta))

    def __iter__(self):
        return iter((self.x, self.y, self.theta))

    def transform(self, points):
        """Map local planar points into the world frame."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.stack([self.x + c * p[:, 0] - s * p[:, 1],
                         self.y + s * p[:, 0] + c * p[:, 1]], axis=1)


@dataclass(frozen=True)
class Bounds:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise ValueError("bounds are degenerate")

    @property
    def width(self):
        return self.max_x - self.min_x

    @property
    def height(self):
        return self.max_y - self.min_y

    def contains(self, points, tol=geom2d.EPS):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return bool(np.all((p[:, 0] >= self.min_x - tol) & (p[:, 0] <= self.max_x + tol)
                           & (p[:, 1] >= self.min_y - tol) & (p[:, 1] <= self.max_y + tol)))


@dataclass(frozen=True)
class RobotFootprint:
    id: str
    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise ValueError(f"robot {self.id!r} needs exactly 4 vertices")
        poly = geom2d.as_polygon(self.vertices)
        if not geom2d.is_convex(poly):
            raise DegenerateInput(f"robot {self.id!r} footprint is not convex")
        object.__setattr__(self, "vertices", tuple((float(x), float(y)) for x, y in poly))

    @property
    def polygon(self):
        return np.array(self.vertices)


@dataclass(frozen=True)
class SearchGrid:
    x_bins: int
    y_bins: int
    theta_bins: int
    bounds: Bounds

    def __post_init__(self):
        if min(self.x_bins, self.y_bins, self.theta_bins) < 1:
            raise ValueError("grid bin counts must be >= 1")

    @property
    def size(self):
        return self.x_bins * self.y_bins * self.theta_bins

    def axes(self):
        b = self.bounds
        xs = b.min_x + (np.arange(self.x_bins) + 0.5) * (b.width / self.x_bins)
        ys = b.min_y + (np.arange(self.y_bins) + 0.5) * (b.height / self.y_bins)
        ts = np.arange(self.theta_bins) * (TWO_PI / self.theta_bins)
        return xs, ys, ts

    def all_poses(self):
        """(size, 3) array of poses in flat index order (ix, iy, itheta)."""
        xs, ys, ts = self.axes()
        gx, gy, gt = np.meshgrid(xs, ys, ts, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gt.ravel()], axis=1)

    def unravel(self, flat):
        return np.unravel_index(flat, (self.x_bins, self.y_bins, self.theta_bins))


def grid_pose(grid, ix, iy, itheta):
    """Pose at the center of grid cell (ix, iy) with heading bin itheta."""
    for name, i, n in (("ix", ix, grid.x_bins), ("iy", iy, grid.y_bins),
                       ("itheta", itheta, grid.theta_bins)):
        if not 0 <= i < n:
            raise IndexOutOfRange(f"{name}={i} outside [0, {n})")
    b = grid.bounds
    return Pose2D(b.min_x + (ix + 0.5) * b.width / grid.x_bins,
                  b.min_y + (iy + 0.5) * b.height / grid.y_bins,
                  itheta * TWO_PI / grid.theta_bins)


@dataclass(frozen=True)
class SensorParams:
    fov: float = math.pi / 2
    max_range: float = 30.0
    n_cols: int = 512
    n_rows: int = 640
    frame_rate: float = 24.0
    dynamic_frame_rate: float = 7.0
    curtain_thickness: float = 0.03
    mount_height: float = 1.0
    vertical_fov: float = math.pi / 2
    occlusion: bool = False
    planar_depth: float = 3.0
    safety_offset: float = 0.10
    slope_limit: float = 0.5


@dataclass(frozen=True)
class TimingConfig:
    command_latency_ms: float = 49.0
    braking_latency_ms: float = 283.0
    threshold: float = 0.5
    persistence_frames: int = 1
    attribution_cap_m: float = 2.0


@dataclass(frozen=True)
class InterferenceModel:
    burst_probability: float = 0.0
    burst_length: tuple = (2, 4)
    burst_columns: int = 16
    seed: int = 0
    forced_starts: tuple = ()

    def __post_init__(self):
        lo, hi = self.length_range
        if not 2 <= lo <= hi <= 4:
            raise ValueError("burst length must lie in [2, 4] frames")

    @property
    def length_range(self):
        bl = self.burst_length
        if isinstance(bl, (int, np.integer)):
            return int(bl), int(bl)
        return int(bl[0]), int(bl[1])


@dataclass(frozen=True)
class ObstaclePrism:
    id: str
    footprint: tuple
    z_min: float
    z_max: float
    reflectivity: float = 1.0
    trajectory: tuple = ((0.0, Pose2D(0.0, 0.0, 0.0)),)

    def __post_init__(self):
        poly = geom2d.as_polygon(self.footprint)
        object.__setattr__(self, "footprint", tuple((float(x), float(y)) for x, y in poly))
        if not self.z_min < self.z_max:
            raise ValueError(f"obstacle {self.id!r}: z_min must be below z_max")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"obstacle {self.id!r}: reflectivity outside [0, 1]")
        if len(self.trajectory) == 0:
            raise ValueError(f"obstacle {self.id!r}: empty trajectory")
        times = [t for t, _ in self.trajectory]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"obstacle {self.id!r}: trajectory times must increase")

    def pose_at(self, t):
        traj = self.trajectory
        if len(traj) == 1 or t <= traj[0][0]:
            return traj[0][1]
        if t >= traj[-1][0]:
            return traj[-1][1]
        times = [k[0] for k in traj]
        i = int(np.searchsorted(times, t, side="right")) - 1
        (t0, p0), (t1, p1) = traj[i], traj[i + 1]
        w = (t - t0) / (t1 - t0)
        dtheta = geom2d.wrap_angle(p1.theta - p0.theta)
        return Pose2D(p0.x + w * (p1.x - p0.x), p0.y + w * (p1.y - p0.y),
                      p0.theta + w * dtheta)

    def poses_at(self, times):
        """Vectorised :meth:`pose_at`; returns (n, 3) arrays of x, y, theta."""
        times = np.asarray(times, dtype=np.float64)
        kt = np.array([k[0] for k in self.trajectory])
        kp = np.array([tuple(k[1]) for k in self.trajectory])
        if len(kt) == 1:
            return np.broadcast_to(kp[0], (times.size, 3)).copy()
        theta = np.unwrap(kp[:, 2])
        return np.stack([np.interp(times, kt, kp[:, 0]),
                         np.interp(times, kt, kp[:, 1]),
                         np.interp(times, kt, theta)], axis=1)

    def footprint_at(self, t):
        return self.pose_at(t).transform(self.footprint)

    @property
    def is_static(self):
        return len(self.trajectory) == 1


@dataclass(frozen=True)
class PlcMount:
    """A fixed PLC placement: true pose plus the calibrated (believed) pose."""
    pose: Pose2D
    calibrated: Pose2D = None

    def __post_init__(self):
        if self.calibrated is None:
            object.__setattr__(self, "calibrated", self.pose)


@dataclass(frozen=True)
class Scenario:
    name: str
    workspace: Bounds
    robots: tuple
    plc_count: int
    grid: SearchGrid
    plcs: tuple = ()
    arms: tuple = ()
    obstacles: tuple = ()
    sensor: SensorParams = field(default_factory=SensorParams)
    timing: TimingConfig = field(default_factory=TimingConfig)
    interference: InterferenceModel = None
    notes: str = ""

    @property
    def robot_ids(self):
        return tuple(r.id for r in self.robots)

    def robot_array(self):
        """(R, 4, 2) footprint vertices in robot order."""
        return np.array([r.vertices for r in self.robots], dtype=np.float64)

    def arm_for(self, robot_id):
        for arm in self.arms:
            if arm.robot_id == robot_id:
                return arm
        return None


# ------------------------------------------------------------------ JSON

def _schema():
    text = resources.files("plcsafe").joinpath("schemas/scenario.schema.json").read_text()
    return json.loads(text)


def _path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _pose_from(d):
    return Pose2D(d["x_m"], d["y_m"], d.get("theta_rad", 0.0))


def _pose_to(p):
    return {"x_m": p.x, "y_m": p.y, "theta_rad": p.theta}


def _bounds_from(d):
    return Bounds(d["min_x_m"], d["min_y_m"], d["max_x_m"], d["max_y_m"])


def _bounds_to(b):
    return {"min_x_m": b.min_x, "min_y_m": b.min_y, "max_x_m": b.max_x, "max_y_m": b.max_y}


_SENSOR_KEYS = {
    "fov": "fov_rad", "max_range": "max_range_m", "n_cols": "n_cols",
    "n_rows": "n_rows", "frame_rate": "frame_rate_hz",
    "dynamic_frame_rate": "dynamic_frame_rate_hz",
    "curtain_thickness": "curtain_thickness_m", "mount_height": "mount_height_m",
    "vertical_fov": "vertical_fov_rad", "occlusion": "occlusion",
    "planar_depth": "planar_depth_m", "safety_offset": "safety_offset_m",
    "slope_limit": "slope_limit_m_per_col",
}
_TIMING_KEYS = {
    "command_latency_ms": "command_latency_ms", "braking_latency_ms": "braking_latency_ms",
    "threshold": "threshold", "persistence_frames": "persistence_frames",
    "attribution_cap_m": "attribution_cap_m",
}


def _transform_from(d):
    if "transform" in d:
        return np.array(d["transform"], dtype=np.float64)
    return make_transform(d.get("xyz_m", (0, 0, 0)), d.get("rpy_rad", (0, 0, 0)))


def _arm_from(d, where):
    base = d.get("base", {})
    links = []
    for j, ld in enumerate(d["links"]):
        try:
            links.append(Link(tuple(ld["axis"]), _transform_from(ld)))
        except ValueError as exc:
            raise ValidationError(_path(where + ["links", j]), str(exc)) from exc
    vps = d.get("virtual_points")
    if vps is not None:
        vps = tuple((v["link"], tuple(v["offset_m"])) for v in vps)
    try:
        chain = ArmChain(_transform_from(base), tuple(links), vps)
    except ValueError as exc:
        raise ValidationError(_path(where), str(exc)) from exc
    script = []
    for j, kf in enumerate(d.get("trajectory", [])):
        if len(kf["angles_rad"]) != chain.n_links:
            raise ValidationError(_path(where + ["trajectory", j, "angles_rad"]),
                                  f"expected {chain.n_links} angles, got {len(kf['angles_rad'])}")
        script.append((float(kf["t_s"]), JointState(tuple(float(a) for a in kf["angles_rad"]),
                                                    float(kf["t_s"]))))
    if not script:
        script = [(0.0, JointState(tuple(0.0 for _ in links), 0.0))]
    times = [t for t, _ in script]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError(_path(where + ["trajectory"]), "keyframe times must increase")
    return ArmTrack(d["robot_id"], chain, tuple(script)), d


def scenario_from_dict(doc):
    """Build and validate a :class:`Scenario` from its JSON document."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        parts = list(err.absolute_path)
        message = err.message
        if parts[:1] == ["robots"] and len(parts) >= 2 and isinstance(parts[1], int):
            rid = doc["robots"][parts[1]].get("id", "?") if isinstance(doc["robots"][parts[1]], dict) else "?"
            message = f"robot {rid!r}: {message}"
        raise ValidationError(_path(parts), message)

    try:
        workspace = _bounds_from(doc["workspace"])
    except ValueError as exc:
        raise ValidationError("workspace", str(exc)) from exc

    robots = []
    seen = set()
    for i, rd in enumerate(doc["robots"]):
        where = f"robots[{i}]"
        rid = rd["id"]
        if rid in seen:
            raise ValidationError(f"{where}.id", f"duplicate robot id {rid!r}")
        seen.add(rid)
        if len(rd["vertices_m"]) != 4:
            raise ValidationError(f"{where}.vertices_m",
                                  f"robot {rid!r} needs exactly 4 vertices, got {len(rd['vertices_m'])}")
        try:
            robot = RobotFootprint(rid, tuple(tuple(v) for v in rd["vertices_m"]))
        except ValueError as exc:
            raise ValidationError(f"{where}.vertices_m", f"robot {rid!r}: {exc}") from exc
        if not workspace.contains(robot.vertices):
            raise ValidationError(f"{where}.vertices_m",
                                  f"robot {rid!r} lies outside the workspace bounds")
        robots.append(robot)

    gd = doc["grid"]
    try:
        bounds = _bounds_from(gd["bounds"]) if "bounds" in gd else workspace
        grid = SearchGrid(gd["x_bins"], gd["y_bins"], gd["theta_bins"], bounds)
    except ValueError as exc:
        raise ValidationError("grid", str(exc)) from exc

    plcs = []
    for i, pd in enumerate(doc.get("plcs", [])):
        cal = pd.get("calibrated")
        plcs.append(PlcMount(_pose_from(pd), _pose_from(cal) if cal else None))

    sensor = SensorParams(**{k: doc["sensor"][v] for k, v in _SENSOR_KEYS.items()
                             if v in doc.get("sensor", {})})
    if not 0 < sensor.fov <= 2 * math.pi:
        raise ValidationError("sensor.fov_rad", "must lie in (0, 2*pi]")
    timing = TimingConfig(**{k: doc["timing"][v] for k, v in _TIMING_KEYS.items()
                             if v in doc.get("timing", {})})

    arms = []
    arm_ids = set()
    for i, ad in enumerate(doc.get("arms", [])):
        where = ["arms", i]
        if ad["robot_id"] not in seen:
            raise ValidationError(_path(where + ["robot_id"]),
                                  f"unknown robot id {ad['robot_id']!r}")
        if ad["robot_id"] in arm_ids:
            raise ValidationError(_path(where + ["robot_id"]),
                                  f"robot {ad['robot_id']!r} has two arms")
        arm_ids.add(ad["robot_id"])
        arms.append(_arm_from(ad, where)[0])

    obstacles = []
    for i, od in enumerate(doc.get("obstacles", [])):
        traj = tuple((float(k["t_s"]), _pose_from(k)) for k in od.get("trajectory", [])) \
            or ((0.0, Pose2D(0.0, 0.0, 0.0)),)
        try:
            obstacles.append(ObstaclePrism(od["id"], tuple(tuple(v) for v in od["footprint_m"]),
                                           od["z_min_m"], od["z_max_m"],
                                           od.get("reflectivity", 1.0), traj))
        except ValueError as exc:
            raise ValidationError(f"obstacles[{i}]", str(exc)) from exc

    interference = None
    if "interference" in doc:
        idoc = doc["interference"]
        try:
            interference = InterferenceModel(
                idoc.get("burst_probability", 0.0), tuple(idoc.get("burst_length", (2, 4))),
                idoc.get("burst_columns", 16), idoc.get("seed", 0),
                tuple(idoc.get("forced_starts", ())))
        except ValueError as exc:
            raise ValidationError("interference", str(exc)) from exc

    return Scenario(doc.get("name", ""), workspace, tuple(robots), doc["plc_count"], grid,
                    tuple(plcs), tuple(arms), tuple(obstacles), sensor, timing, interference,
                    doc.get("notes", ""))


def _arm_to(arm):
    from .robotarm import default_virtual_points  # local: only needed on save
    chain = arm.chain
    links = [{"axis": [float(v) for v in link.axis], "transform": link.transform.tolist()}
             for link in chain.links]
    out = {"robot_id": arm.robot_id,
           "base": {"transform": chain.base.tolist()},
           "links": links,
           "trajectory": [{"t_s": t, "angles_rad": list(s.angles)} for t, s in arm.script]}
    if chain.virtual_points != default_virtual_points(chain.links):
        out["virtual_points"] = [{"link": i, "offset_m": list(o)} for i, o in chain.virtual_points]
    return out


def scenario_to_dict(s):
    doc = {"name": s.name,
           "workspace": _bounds_to(s.workspace),
           "robots": [{"id": r.id, "vertices_m": [list(v) for v in r.vertices]} for r in s.robots],
           "plc_count": s.plc_count,
           "grid": {"x_bins": s.grid.x_bins, "y_bins": s.grid.y_bins,
                    "theta_bins": s.grid.theta_bins, "bounds": _bounds_to(s.grid.bounds)},
           "sensor": {v: getattr(s.sensor, k) for k, v in _SENSOR_KEYS.items()},
           "timing": {v: getattr(s.timing, k) for k, v in _TIMING_KEYS.items()}}
    if s.plcs:
        doc["plcs"] = []
        for m in s.plcs:
            entry = _pose_to(m.pose)
            if m.calibrated != m.pose:
                entry["calibrated"] = _pose_to(m.calibrated)
            doc["plcs"].append(entry)
    if s.arms:
        doc["arms"] = [_arm_to(a) for a in s.arms]
    if s.obstacles:
        doc["obstacles"] = [{"id": o.id, "footprint_m": [list(v) for v in o.footprint],
                             "z_min_m": o.z_min, "z_max_m": o.z_max,
                             "reflectivity": o.reflectivity,
                             "trajectory": [dict(t_s=t, **_pose_to(p)) for t, p in o.trajectory]}
                            for o in s.obstacles]
    if s.interference is not None:
        m = s.interference
        doc["interference"] = {"burst_probability": m.burst_probability,
                               "burst_length": list(m.length_range),
                               "burst_columns": m.burst_columns, "seed": m.seed,
                               "forced_starts": list(m.forced_starts)}
    if s.notes:
        doc["notes"] = s.notes
    return doc


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(doc)


def save_scenario(scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def with_sensor(scenario, **changes):
    return replace(scenario, sensor=replace(scenario.sensor, **changes))


def fixture_path(name):
    """Path of a scenario file shipped with the package."""
    return str(resources.files("plcsafe").joinpath("fixtures").joinpath(name))


def load_fixture(name):
    return load_scenario(fixture_path(name if name.endswith(".json") else name + ".json"))


__all__ = ["Pose2D", "Bounds", "RobotFootprint", "SearchGrid", "SensorParams",
           "TimingConfig", "InterferenceModel", "ObstaclePrism", "PlcMount", "Scenario",
           "grid_pose", "load_scenario", "save_scenario", "scenario_from_dict",
           "scenario_to_dict", "load_fixture", "fixture_path", "with_sensor",
           "normalize_heading"]

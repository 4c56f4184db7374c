"""Intrusion detection and the simulated stop pipeline.

The pipeline runs on one logical clock stepped at the curtain frame period.
Frame ``k`` exposes its columns one after another during ``[kT, (k+1)T)``
(rolling shutter) and is read out at ``(k+1)T``; detections, stop commands
and robot stops are stamped from that readout time. Ground-truth intrusion
times come from the obstacle scripts at 1 ms resolution.
"""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import curtain, geom2d, plcsim
from .errors import EmptyTimeline, ValidationError
from .layout import TimingConfig
from .robotarm import project_top_down

INTRUSION = "intrusion_truth"
DETECTION = "detection"
STOP_ISSUED = "stop_issued"
ROBOT_STOPPED = "robot_stopped"
RESUME = "resume"
EVENT_KINDS = (INTRUSION, DETECTION, STOP_ISSUED, ROBOT_STOPPED, RESUME)
_KIND_ORDER = {k: i for i, k in enumerate(EVENT_KINDS)}

PLANAR_MODE = "planar"
DYNAMIC_MODE = "dynamic"


@dataclass(frozen=True, eq=False)
class Detection:
    frame: int
    columns: tuple
    locations: np.ndarray
    robot_id: str = None
    plc: int = 0

    def __post_init__(self):
        if len(self.columns) == 0:
            raise ValueError("a detection needs at least one column")
        if len(self.locations) != len(self.columns):
            raise ValueError("one location per detected column")

    @property
    def centroid(self):
        return np.asarray(self.locations).mean(axis=0)


@dataclass(frozen=True)
class StopEvent:
    frame: int
    run_start: int


def detect(image, threshold, plc, plc_index=0):
    """Columns with a return at or above ``threshold``, back-projected to 3D."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    hot = image.intensity >= threshold
    cols = np.flatnonzero(hot.any(axis=0))
    if cols.size == 0:
        return None
    tan_r = plc.row_tangents()
    rows_tan = np.array([tan_r[hot[:, c]].mean() for c in cols])
    rng = np.asarray(image.column_range)[cols]
    b = plc.world_bearings()[cols]
    locs = np.stack([plc.pose.x + rng * np.cos(b), plc.pose.y + rng * np.sin(b),
                     plc.mount_height + rng * rows_tan], axis=1)
    return Detection(image.frame, tuple(int(c) for c in cols), locs, None, plc_index)


def persistence_filter(stream, k):
    """Yield a StopEvent when a run of consecutive detections reaches ``k``.

    ``stream`` holds one item per frame: a Detection or None. Frames are
    numbered by stream position. With ``k=1``
    every isolated detection stops; with ``k=5`` runs of up to four frames
    (typical interference) are ignored.
    """
    if k < 1:
        raise ValueError("persistence must be at least one frame")
    run = 0
    for frame, det in enumerate(stream):
        if det is None:
            run = 0
            continue
        run += 1
        if run == k:
            yield StopEvent(frame, frame - k + 1)


def hull_distances(point, hulls):
    """Distance from a planar point to each (id, polygon), zero inside."""
    p = np.asarray(point, dtype=np.float64)[:2]
    out = []
    for _, poly in hulls:
        d = float(geom2d.signed_distance(poly, p[None])[0])
        out.append(max(d, 0.0))
    return out


def attribute_robot(det, hulls):
    """Id of the robot hull nearest the detection centroid (ties: lower id)."""
    if not hulls:
        raise ValueError("no robot hulls to attribute against")
    dists = hull_distances(det.centroid, hulls)
    best = min(range(len(hulls)), key=lambda i: (dists[i], str(hulls[i][0])))
    return hulls[best][0]


# ------------------------------------------------------------ timelines

@dataclass(frozen=True)
class Event:
    t_ms: int
    kind: str
    payload: dict = field(default_factory=dict, compare=False)


@dataclass
class EventTimeline:
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def of_kind(self, kind):
        return [e for e in self.events if e.kind == kind]

    def check(self):
        """Raise AssertionError when the ordering invariants do not hold."""
        ts = [e.t_ms for e in self.events]
        assert all(a <= b for a, b in zip(ts, ts[1:])), "timestamps decrease"
        pending = {}
        for e in self.events:
            rid = e.payload.get("robot_id")
            if e.kind == STOP_ISSUED:
                pending[rid] = pending.get(rid, 0) + 1
            elif e.kind == ROBOT_STOPPED:
                assert pending.get(rid, 0) > 0, f"robot {rid} stopped without a stop command"
                pending[rid] -= 1

    def to_dict(self):
        return {"meta": self.meta,
                "events": [{"t_ms": e.t_ms, "kind": e.kind, **e.payload} for e in self.events]}

    @classmethod
    def from_dict(cls, doc):
        events = []
        for d in doc.get("events", []):
            d = dict(d)
            t = int(d.pop("t_ms"))
            kind = d.pop("kind")
            events.append(Event(t, kind, d))
        return cls(events, doc.get("meta", {}))

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _ms(t):
    return int(round(t * 1000.0))


# ------------------------------------------------------------- pipeline

class _RobotState:
    def __init__(self, robot_id):
        self.robot_id = robot_id
        self.run = 0
        self.stopping = False
        self.stopped_at = None     # seconds, when braking completes
        self.paused = 0.0          # accumulated standstill time

    def script_time(self, t):
        if self.stopped_at is not None and t >= self.stopped_at:
            return self.stopped_at - self.paused
        return t - self.paused


def _assign_robots(scenario):
    """Map each robot id to the index of its closest fixed PLC."""
    owners = {}
    for r in scenario.robots:
        c = np.asarray(r.vertices).mean(axis=0)
        d = [math.hypot(c[0] - m.pose.x, c[1] - m.pose.y) for m in scenario.plcs]
        owners[r.id] = int(np.argmin(d))
    return owners


def _robot_world_points(scenario, robot_id, script_t):
    arm = scenario.arm_for(robot_id)
    if arm is not None:
        return arm.points_at(script_t)
    verts = np.asarray(next(r.vertices for r in scenario.robots if r.id == robot_id))
    return np.column_stack([verts, np.zeros(len(verts))])


def _robot_hull(points3d):
    try:
        return geom2d.convex_hull(points3d[:, :2])
    except geom2d.DegenerateInput:
        return curtain._padded_hull(points3d[:, :2])


def run_pipeline(scenario, duration, mode=PLANAR_MODE, seed=0, timing=None,
                 interference=None, time_offset=0.0, truth_step=1e-3, on_frame=None):
    """Simulate the detect-and-stop loop for ``duration`` seconds.

    ``time_offset`` delays every obstacle script, which randomizes the phase
    of an intrusion relative to the frame clock. ``seed`` is added to the
    interference model's own seed; PLC ``j`` draws from its seed plus 7919 j.
    ``on_frame(k, profiles)`` is called with each frame's per-PLC curtains.
    """
    if mode not in (PLANAR_MODE, DYNAMIC_MODE):
        raise ValueError(f"unknown mode {mode!r}")
    if not scenario.plcs:
        raise ValidationError("plcs", "the pipeline needs fixed PLC poses")
    if mode == DYNAMIC_MODE and not scenario.robots:
        raise ValidationError("robots", "dynamic mode needs robots to envelope")
    timing = timing or scenario.timing
    interference = interference if interference is not None else scenario.interference
    dynamic = mode == DYNAMIC_MODE
    plcs = [curtain.PlcModel.from_scenario(scenario, m.pose, dynamic=dynamic)
            for m in scenario.plcs]
    period = plcs[0].frame_period
    n_frames = int(math.floor(duration / period + 1e-9)) if duration > 0 else 0
    owners = _assign_robots(scenario)
    states = {r.id: _RobotState(r.id) for r in scenario.robots}
    injectors = None
    if interference is not None:
        injectors = [plcsim.InterferenceInjector(replace(interference,
                                                         seed=interference.seed + 7919 * j + seed))
                     for j in range(len(plcs))]
    obstacles = scenario.obstacles
    events = []
    profiles = []  # per frame, per PLC

    planar = [curtain.planar_curtain(min(scenario.sensor.planar_depth, p.max_range), p)
              for p in plcs]
    col_frac = (np.arange(plcs[0].n_cols) + 0.5) / plcs[0].n_cols

    for k in range(n_frames):
        t0 = k * period
        t_end = t0 + period
        frame_profiles = []
        attributed = {rid: False for rid in states}
        for j, plc in enumerate(plcs):
            mine = [rid for rid, o in owners.items() if o == j]
            if dynamic:
                point_sets = [project_top_down(
                    _robot_world_points(scenario, rid, states[rid].script_time(t0)), plc.pose)
                    for rid in mine]
                if point_sets:
                    prof = curtain.design_group_curtain(point_sets, plc,
                                                        scenario.sensor.safety_offset, stamp=k)
                else:
                    prof = curtain.CurtainProfile(np.full(plc.n_cols, plc.max_range),
                                                  curtain.SAFETY, k)
            else:
                prof = planar[j].restamp(k)
            frame_profiles.append(prof)
            col_times = t0 + col_frac * period - time_offset
            img = plcsim.image_curtain(obstacles, t0 - time_offset, plc, prof, frame=k,
                                       column_times=col_times)
            if injectors is not None:
                img = injectors[j].apply(img)
            det = detect(img, timing.threshold, plc, j)
            if det is None:
                continue
            hulls = [(rid, _robot_hull(_robot_world_points(scenario, rid,
                                                           states[rid].script_time(t0))))
                     for rid in sorted(mine)]
            targets = []
            if hulls:
                dists = hull_distances(det.centroid, hulls)
                best = attribute_robot(det, hulls)
                if min(dists) <= timing.attribution_cap_m:
                    targets = [best]
                else:
                    targets = [rid for rid, _ in hulls]
            for rid in targets:
                attributed[rid] = True
            events.append(Event(_ms(t_end), DETECTION,
                                {"frame": k, "plc": j, "robots": targets,
                                 "columns": len(det.columns)}))
        profiles.append(frame_profiles)
        if on_frame is not None:
            on_frame(k, frame_profiles)

        for rid, st in states.items():
            if attributed[rid]:
                st.run += 1
                if st.run == timing.persistence_frames and not st.stopping:
                    t_stop = t_end + timing.command_latency_ms / 1000.0
                    t_halt = t_stop + timing.braking_latency_ms / 1000.0
                    events.append(Event(_ms(t_stop), STOP_ISSUED, {"robot_id": rid, "frame": k}))
                    events.append(Event(_ms(t_halt), ROBOT_STOPPED, {"robot_id": rid, "frame": k}))
                    st.stopping = True
                    st.stopped_at = t_halt
            else:
                st.run = 0
                if st.stopping:
                    t_resume = max(t_end, st.stopped_at)
                    events.append(Event(_ms(t_resume), RESUME, {"robot_id": rid, "frame": k}))
                    st.paused += t_resume - st.stopped_at
                    st.stopping = False
                    st.stopped_at = None

    events.extend(_truth_events(obstacles, plcs, profiles, period, n_frames,
                                time_offset, truth_step))
    events.sort(key=lambda e: (e.t_ms, _KIND_ORDER[e.kind]))
    meta = {"mode": mode, "duration_s": duration, "frame_period_ms": period * 1000.0,
            "frames": n_frames, "seed": seed, "time_offset_s": time_offset,
            "persistence_frames": timing.persistence_frames}
    return EventTimeline(events, meta)


def _truth_events(obstacles, plcs, profiles, period, n_frames, time_offset, step):
    """Rising edges of curtain contact per obstacle, sampled every ``step`` s.

    Contact is judged per obstacle (other obstacles do not hide it), against
    the curtain that was active during the frame containing the instant.
    """
    out = []
    if not obstacles or n_frames == 0:
        return out
    n_steps = int(math.floor(n_frames * period / step + 1e-9))
    times = np.arange(n_steps) * step
    frame_of = np.minimum((times / period).astype(np.int64), n_frames - 1)
    for ob in obstacles:
        on = np.zeros(n_steps, dtype=bool)
        for k in np.unique(frame_of):
            sel = np.flatnonzero(frame_of == k)
            for j, plc in enumerate(plcs):
                hit = plcsim.contact_series(ob, times[sel] - time_offset, plc, profiles[k][j])
                on[sel] |= hit.any(axis=1)
        rising = np.flatnonzero(on & ~np.concatenate([[False], on[:-1]]))
        out.extend(Event(_ms(times[i]), INTRUSION, {"obstacle": ob.id}) for i in rising)
    return out


def latency_report(timelines):
    """Median delay (ms) from each intrusion to detection, stop and halt.

    Accepts one timeline or a list of them; episodes are pooled.
    """
    if isinstance(timelines, EventTimeline):
        timelines = [timelines]
    deltas = {DETECTION: [], STOP_ISSUED: [], ROBOT_STOPPED: []}
    for tl in timelines:
        truths = [e for e in tl.events if e.kind == INTRUSION]
        for i, truth in enumerate(truths):
            limit = truths[i + 1].t_ms if i + 1 < len(truths) else math.inf
            firsts = {}
            for e in tl.events:
                if e.kind in deltas and e.kind not in firsts and truth.t_ms <= e.t_ms:
                    if e.kind == DETECTION and e.t_ms >= limit:
                        continue
                    firsts[e.kind] = e.t_ms - truth.t_ms
            if len(firsts) == len(deltas):
                for kind, d in firsts.items():
                    deltas[kind].append(d)
    if not deltas[DETECTION]:
        raise EmptyTimeline("no complete intrusion episode in the timeline")
    report = {kind: float(np.median(v)) for kind, v in deltas.items()}
    report["episodes"] = len(deltas[DETECTION])
    return report


def latency_trials(scenario, mode, trials, seed, duration=None, timing=None):
    """Run the pipeline with randomized intrusion phases; returns timelines."""
    rng = np.random.default_rng(seed)
    dynamic = mode == DYNAMIC_MODE
    rate = scenario.sensor.dynamic_frame_rate if dynamic else scenario.sensor.frame_rate
    period = 1.0 / rate
    if duration is None:
        last = max((o.trajectory[-1][0] for o in scenario.obstacles), default=1.0)
        duration = last + 4 * period + 1.0
    out = []
    for _ in range(trials):
        offset = float(rng.uniform(0.0, 1.0))
        out.append(run_pipeline(scenario, duration + offset, mode, seed=seed,
                                timing=timing, time_offset=offset))
    return out

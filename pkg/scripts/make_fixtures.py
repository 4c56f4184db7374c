"""Regenerate the scenario fixtures shipped in src/plcsafe/fixtures.

Geometry that the source experiments do not publish (robot sizes, exact
positions, obstacle scripts) is estimated here; each fixture's ``notes``
field says which numbers are estimates.
"""
import json
import math
import os
import sys

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "plcsafe", "fixtures")


def square(cx, cy, half=0.5, yaw=0.0):
    c, s = math.cos(yaw), math.sin(yaw)
    pts = []
    for dx, dy in ((-half, -half), (half, -half), (half, half), (-half, half)):
        pts.append([round(cx + c * dx - s * dy, 6), round(cy + s * dx + c * dy, 6)])
    return pts


def bounds(x0, y0, x1, y1):
    return {"min_x_m": x0, "min_y_m": y0, "max_x_m": x1, "max_y_m": y1}


def box_arm(robot_id, cx, cy, half=0.4, height=0.3, keyframes=None):
    """One yawing link carrying four virtual points at the corners of a box."""
    vps = [{"link": 0, "offset_m": [sx * half, sy * half, 0.0]}
           for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    return {"robot_id": robot_id,
            "base": {"xyz_m": [cx, cy, 0.0], "rpy_rad": [0.0, 0.0, 0.0]},
            "links": [{"axis": [0.0, 0.0, 1.0], "xyz_m": [0.0, 0.0, height],
                       "rpy_rad": [0.0, 0.0, 0.0]}],
            "virtual_points": vps,
            "trajectory": keyframes or [{"t_s": 0.0, "angles_rad": [0.0]}]}


def six_axis_arm(robot_id, cx, cy, yaw=0.0, keyframes=None):
    """A small 6-joint arm with default virtual points (link sizes estimated)."""
    links = [
        {"axis": [0, 0, 1], "xyz_m": [0.0, 0.0, 0.33], "rpy_rad": [0, 0, 0]},
        {"axis": [0, 1, 0], "xyz_m": [0.0, 0.0, 0.26], "rpy_rad": [0, 0, 0]},
        {"axis": [0, 1, 0], "xyz_m": [0.29, 0.0, 0.0], "rpy_rad": [0, 0, 0]},
        {"axis": [1, 0, 0], "xyz_m": [0.0, 0.0, 0.015], "rpy_rad": [0, 0, 0]},
        {"axis": [0, 1, 0], "xyz_m": [0.0, 0.0, 0.0], "rpy_rad": [0, 0, 0]},
        {"axis": [1, 0, 0], "xyz_m": [0.072, 0.0, 0.0], "rpy_rad": [0, 0, 0]},
    ]
    return {"robot_id": robot_id,
            "base": {"xyz_m": [cx, cy, 0.0], "rpy_rad": [0.0, 0.0, yaw]},
            "links": links,
            "trajectory": keyframes or [{"t_s": 0.0, "angles_rad": [0.0] * 6}]}


def box(id_, footprint, z0, z1, keyframes, reflectivity=1.0):
    return {"id": id_, "footprint_m": footprint, "z_min_m": z0, "z_max_m": z1,
            "reflectivity": reflectivity, "trajectory": keyframes}


def kf(t, x, y, th=0.0):
    return {"t_s": t, "x_m": x, "y_m": y, "theta_rad": th}


HUMAN = [[0.0, -0.2], [0.4, -0.2], [0.4, 0.2], [0.0, 0.2]]


def latency_planar():
    return {
        "name": "latency-planar",
        "notes": "Planar curtain 3 m ahead of one PLC; a 0.4 m wide intruder walks in "
                 "from behind and stops with its front face on the curtain. Sizes estimated.",
        "workspace": bounds(-1, -3, 6, 3),
        "robots": [{"id": "R1", "vertices_m": square(3.8, 1.1)}],
        "plc_count": 1,
        "grid": {"x_bins": 1, "y_bins": 1, "theta_bins": 1},
        "plcs": [{"x_m": 0.0, "y_m": 0.0, "theta_rad": 0.0}],
        "sensor": {"planar_depth_m": 3.0},
        "obstacles": [box("human", HUMAN, 0.0, 1.8,
                          [kf(0.0, 4.0, 0.0), kf(1.0, 3.0, 0.0)])],
    }


def latency_dynamic():
    return {
        "name": "latency-dynamic",
        "notes": "Safety curtain around one box-shaped arm envelope; an intruder slides in "
                 "sideways with its front face on the envelope. Sizes estimated.",
        "workspace": bounds(-1, -3, 7, 3),
        "robots": [{"id": "R1", "vertices_m": square(5.0, 0.0)}],
        "plc_count": 1,
        "grid": {"x_bins": 1, "y_bins": 1, "theta_bins": 1},
        "plcs": [{"x_m": 0.0, "y_m": 0.0, "theta_rad": 0.0}],
        "arms": [box_arm("R1", 5.0, 0.0)],
        "obstacles": [box("human", HUMAN, 0.0, 1.8,
                          [kf(0.0, 4.5, 1.7), kf(1.5, 4.5, 0.2)])],
    }


def interference_only():
    return {
        "name": "interference-only",
        "notes": "No obstacles; other sensors inject 2-4 frame bursts at a high rate.",
        "workspace": bounds(-1, -3, 6, 3),
        "robots": [{"id": "R1", "vertices_m": square(3.8, 0.0)}],
        "plc_count": 1,
        "grid": {"x_bins": 1, "y_bins": 1, "theta_bins": 1},
        "plcs": [{"x_m": 0.0, "y_m": 0.0, "theta_rad": 0.0}],
        "sensor": {"planar_depth_m": 3.0, "n_cols": 128, "n_rows": 64},
        "timing": {"persistence_frames": 5},
        "interference": {"burst_probability": 0.3, "burst_length": [2, 4],
                         "burst_columns": 12, "seed": 11},
    }


def _wall(id_, x0, y0, x1, y1, z0=0.0, z1=2.5):
    return box(id_, [[x0, y0], [x1, y0], [x1, y1], [x0, y1]], z0, z1, [kf(0.0, 0.0, 0.0)])


def boxroom():
    return {
        "name": "boxroom",
        "notes": "6 x 5 m room with window bands, three boxes, shelf boards and a table top, swept by two PLCs on the south wall. The second "
                 "PLC's calibrated pose is off by 3 cm / 2 cm / 2 deg, which ICP must undo.",
        "workspace": bounds(-0.2, -0.2, 6.2, 5.2),
        "robots": [{"id": "R1", "vertices_m": [[3.6, 1.25], [4.4, 1.25], [4.4, 1.75], [3.6, 1.75]]}],
        "plc_count": 2,
        "grid": {"x_bins": 4, "y_bins": 4, "theta_bins": 8},
        "plcs": [{"x_m": 2.0, "y_m": 0.2, "theta_rad": math.pi / 2},
                 {"x_m": 4.0, "y_m": 0.2, "theta_rad": math.pi / 2,
                  "calibrated": {"x_m": 4.03, "y_m": 0.18,
                                 "theta_rad": math.pi / 2 + math.radians(2.0)}}],
        "sensor": {"n_cols": 512, "n_rows": 320, "curtain_thickness_m": 0.01,
                   "mount_height_m": 1.2, "vertical_fov_rad": math.pi / 2},
        "obstacles": [
            _wall("wall_s", -0.1, -0.1, 6.1, 0.0),
            _wall("wall_n_left", -0.1, 5.0, 1.0, 5.1), _wall("wall_n_right", 5.0, 5.0, 6.1, 5.1),
            _wall("wall_n_sill", 1.0, 5.0, 5.0, 5.1, z0=0.0, z1=0.9),
            _wall("wall_n_lintel", 1.0, 5.0, 5.0, 5.1, z0=1.6, z1=2.5),
            _wall("wall_w_low", -0.1, 0.0, 0.0, 5.0, z0=0.0, z1=1.0),
            _wall("wall_w_high", -0.1, 0.0, 0.0, 5.0, z0=1.8, z1=2.5),
            _wall("wall_e", 6.0, 0.0, 6.1, 5.0),
            box("box_a", [[-0.3, -0.3], [0.3, -0.3], [0.3, 0.3], [-0.3, 0.3]], 0.0, 0.8,
                [kf(0.0, 2.0, 3.5)]),
            box("box_b", [[-0.4, -0.25], [0.4, -0.25], [0.4, 0.25], [-0.4, 0.25]], 0.0, 1.2,
                [kf(0.0, 4.0, 1.5, 0.3)], reflectivity=0.8),
            box("box_c", [[-0.25, -0.25], [0.25, -0.25], [0.25, 0.25], [-0.25, 0.25]], 0.0, 1.6,
                [kf(0.0, 3.2, 3.0, 0.6)], reflectivity=0.9),
            *[box(f"shelf_{i}", [[1.0, 4.8], [5.0, 4.8], [5.0, 4.9], [1.0, 4.9]], z, z + 0.06,
                  [kf(0.0, 0.0, 0.0)]) for i, z in enumerate((0.3, 1.0, 1.4, 1.9, 2.2))],
            box("table_top", [[-0.4, -0.3], [0.4, -0.3], [0.4, 0.3], [-0.4, 0.3]], 0.7, 0.75,
                [kf(0.0, 1.5, 2.0, 0.2)]),
        ],
    }


# ---------------------------------------------------------------- placement

LAYOUT_SENSOR = {"occlusion": True, "fov_rad": 2 * math.pi / 3}
LAYOUT_NOTE = ("Robot size and spacing are estimates; FOV 120 deg with occlusion on "
              "(both are assumptions).")


def _placement(name, notes, size, robots, plc_count, bins=(50, 50, 20), sensor=None):
    return {
        "name": name,
        "notes": notes,
        "workspace": bounds(0.0, 0.0, size, size),
        "robots": [{"id": f"R{i + 1}", "vertices_m": v} for i, v in enumerate(robots)],
        "plc_count": plc_count,
        "grid": {"x_bins": bins[0], "y_bins": bins[1], "theta_bins": bins[2]},
        "sensor": sensor or {},
    }


def two_rows(size, half, gap, row_gap, shift):
    """Two rows of three square robots; the back row is offset by ``shift``."""
    cx = cy = size / 2
    pitch = 2 * half + gap
    rows = (cy - (row_gap / 2 + half), cy + (row_gap / 2 + half))
    out = []
    for j, y in enumerate(rows):
        for x in (cx - pitch, cx, cx + pitch):
            out.append(square(x + (shift if j == 1 else 0.0) - shift / 2, y, half))
    return out


def grid_six():
    return _placement("grid-six", "Two aligned rows of three robots. " + LAYOUT_NOTE,
                      10.0, two_rows(10.0, 0.3, 2.0, 0.3, 0.0), 2, sensor=LAYOUT_SENSOR)


def staggered_six():
    return _placement("staggered-six",
                      "Two rows of three robots, back row shifted by half a pitch. " + LAYOUT_NOTE,
                      10.0, two_rows(10.0, 0.3, 2.0, 0.3, 1.3), 2, sensor=LAYOUT_SENSOR)


def random_seven():
    import numpy as np
    rng = np.random.default_rng(1)
    placed = []
    while len(placed) < 7:
        cx, cy = rng.uniform(1.5, 8.5, 2)
        yaw = rng.uniform(0.0, math.pi / 2)
        if all(math.hypot(cx - p[0], cy - p[1]) > 1.8 for p in placed):
            placed.append((float(cx), float(cy), float(yaw)))
    robots = [square(x, y, 0.3, a) for x, y, a in placed]
    return _placement("random-seven",
                      "Seven robots at seeded random positions and headings. " + LAYOUT_NOTE,
                      10.0, robots, 3, sensor=LAYOUT_SENSOR)


def octagon_eight():
    robots = [square(5.0 + 3.0 * math.cos(k * math.pi / 4), 5.0 + 3.0 * math.sin(k * math.pi / 4),
                     0.3, k * math.pi / 4) for k in range(8)]
    return _placement("octagon-eight", "Eight robots on a 3 m ring facing the centre. " + LAYOUT_NOTE,
                      10.0, robots, 4, sensor=LAYOUT_SENSOR)


def three_robots():
    robots = [square(2.5, 2.5, 0.5), square(5.5, 3.0, 0.5, 0.4), square(4.0, 5.8, 0.5)]
    return _placement("three-robots", "Three robots on an 8 x 8 m floor. Positions estimated.",
                      8.0, robots, 2)


def small_grid():
    robots = [square(3.0, 5.0, 0.5), square(5.0, 5.0, 0.5), square(7.0, 5.0, 0.5)]
    return _placement("small-grid",
                      "Three robots in a row on a coarse 10 x 10 x 20 grid, small enough "
                      "for exhaustive search. Positions estimated.",
                      10.0, robots, 2, bins=(10, 10, 20))


# ---------------------------------------------------------------- testbed

TESTBED_CELLS = ((2.2, 1.9), (7.1, 1.9), (2.2, 4.0), (7.1, 4.0))


def testbed():
    robots = []
    arms = []
    obstacles = [
        _wall("wall_s", -0.1, -0.1, 9.4, 0.0),
        _wall("wall_n_left", -0.1, 5.9, 1.5, 6.0), _wall("wall_n_right", 7.8, 5.9, 9.4, 6.0),
        _wall("wall_n_sill", 1.5, 5.9, 7.8, 6.0, z0=0.0, z1=0.9),
        _wall("wall_n_lintel", 1.5, 5.9, 7.8, 6.0, z0=1.6, z1=2.5),
        _wall("wall_w_low", -0.1, 0.0, 0.0, 5.9, z0=0.0, z1=1.0),
        _wall("wall_w_high", -0.1, 0.0, 0.0, 5.9, z0=1.8, z1=2.5),
        _wall("wall_e", 9.3, 0.0, 9.4, 5.9),
    ]
    for i, (x, y) in enumerate(TESTBED_CELLS):
        rid = f"R{i + 1}"
        robots.append({"id": rid, "vertices_m": square(x, y, 0.45)})
        sweep = 0.6 if i % 2 == 0 else -0.6
        arms.append(six_axis_arm(rid, x, y, keyframes=[
            {"t_s": 0.0, "angles_rad": [0.0, 0.3, 0.6, 0.0, 0.4, 0.0]},
            {"t_s": 15.0, "angles_rad": [sweep, 0.7, 0.2, 0.5, -0.3, 0.8]},
            {"t_s": 30.0, "angles_rad": [2 * sweep, -0.2, 1.0, -0.5, 0.6, -0.4]},
        ]))
        obstacles.append(box(f"bench_{rid}", square(0.0, 0.0, 0.45), 0.0, 0.7,
                             [kf(0.0, x, y)], reflectivity=0.8))
    obstacles += [
        box("cart", [[-0.35, -0.25], [0.35, -0.25], [0.35, 0.25], [-0.35, 0.25]], 0.0, 1.1,
            [kf(0.0, 4.6, 3.1, 0.4)], reflectivity=0.9),
        box("crate", square(0.0, 0.0, 0.3), 0.0, 1.5, [kf(0.0, 5.6, 1.6, 0.7)]),
        *[box(f"shelf_{i}", [[1.5, 5.8], [7.8, 5.8], [7.8, 5.9], [1.5, 5.9]], z, z + 0.06,
              [kf(0.0, 0.0, 0.0)]) for i, z in enumerate((0.3, 1.0, 1.4, 1.9, 2.2))],
        box("desk_top", [[-0.6, -0.35], [0.6, -0.35], [0.6, 0.35], [-0.6, 0.35]], 0.72, 0.77,
            [kf(0.0, 4.6, 5.0)]),
    ]
    return {
        "name": "testbed",
        "notes": "9.3 x 5.9 m cell with four arm workstations and two PLCs on the south wall. "
                 "Workstation, arm and furniture sizes are estimates. The second PLC's "
                 "calibrated pose is off by 3 cm / 2 cm / 2 deg.",
        "workspace": bounds(0.0, 0.0, 9.3, 5.9),
        "robots": robots,
        "plc_count": 2,
        "grid": {"x_bins": 31, "y_bins": 20, "theta_bins": 16},
        "plcs": [{"x_m": 3.5, "y_m": 0.2, "theta_rad": math.pi / 2},
                 {"x_m": 6.2, "y_m": 0.2, "theta_rad": math.pi / 2,
                  "calibrated": {"x_m": 6.23, "y_m": 0.18,
                                 "theta_rad": math.pi / 2 + math.radians(2.0)}}],
        "sensor": {"n_cols": 512, "n_rows": 320, "curtain_thickness_m": 0.01,
                   "mount_height_m": 1.2, "vertical_fov_rad": math.pi / 2},
        "arms": arms,
        "obstacles": obstacles,
    }


FIXTURES = {
    "boxroom": boxroom,
    "three_robots": three_robots,
    "grid_six": grid_six,
    "staggered_six": staggered_six,
    "random_seven": random_seven,
    "octagon_eight": octagon_eight,
    "small_grid": small_grid,
    "testbed": testbed,
    "latency_planar": latency_planar,
    "latency_dynamic": latency_dynamic,
    "interference_only": interference_only,
}


def main(names):
    os.makedirs(OUT, exist_ok=True)
    for name in names or sorted(FIXTURES):
        with open(os.path.join(OUT, name + ".json"), "w", encoding="utf-8") as fh:
            json.dump(FIXTURES[name](), fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1:])

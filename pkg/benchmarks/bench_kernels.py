"""Time the numba and numpy backends of the hot kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Both backends run in one process; every kernel is compiled before timing.
"""
import argparse
import json
import time

import numpy as np

from plcsafe import _accel, _kernels, curtain, instrument, layout, robotarm
from plcsafe.layout import Pose2D


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ray_entry(repeat):
    rng = np.random.default_rng(0)
    n = 200_000
    ang = rng.uniform(0, 2 * np.pi, n)
    origins = rng.uniform(-1, 1, (n, 2))
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    poly = np.array([[2.0, -1.0], [3.0, -1.0], [3.5, 0.0], [3.0, 1.0], [2.0, 1.0]])
    return {flag: best_of(lambda: _kernels.ray_entry(origins, dirs, poly, use_numba=flag), repeat)
            for flag in (True, False)}, f"{n} rays vs one pentagon"


def bench_combine(repeat):
    sc = layout.load_fixture("staggered_six")
    table = instrument.grid_table(sc)
    idx = np.random.default_rng(1).integers(0, sc.grid.size, (200_000, 2))
    bonus = instrument.FULL_COVERAGE_BONUS
    return {flag: best_of(lambda: _kernels.combine_scores(table, idx, bonus, use_numba=flag),
                          repeat)
            for flag in (True, False)}, "200k two-PLC configurations, 6 robots"


def bench_brute_force(repeat):
    sc = layout.load_fixture("small_grid")
    table = instrument.grid_table(sc)
    bonus = instrument.FULL_COVERAGE_BONUS
    return {flag: best_of(lambda: _kernels.brute_force(table, 2, bonus, use_numba=flag), repeat)
            for flag in (True, False)}, f"{sc.grid.size}^2 pairs on the 10x10x20 grid"


def bench_safety_curtain(repeat):
    sc = layout.load_fixture("testbed")
    plc = curtain.PlcModel.from_scenario(sc, Pose2D(0, 0, 0), dynamic=True)
    arm = sc.arms[0]
    p2 = robotarm.project_top_down(arm.points_at(3.0), tuple(sc.plcs[0].pose))
    reps = 100
    out = {}
    for flag in (True, False):
        saved = _accel.USE_NUMBA
        _accel.USE_NUMBA = flag
        try:
            out[flag] = best_of(lambda: [curtain.design_safety_curtain(p2, plc)
                                         for _ in range(reps)], repeat) / reps
        finally:
            _accel.USE_NUMBA = saved
    return out, f"one testbed arm, {plc.n_cols} columns, per curtain"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, fn in (("ray_entry", bench_ray_entry), ("combine_scores", bench_combine),
                     ("brute_force", bench_brute_force),
                     ("design_safety_curtain", bench_safety_curtain)):
        fn(1)  # warm up and compile
        times, what = fn(args.repeat)
        rows.append({"kernel": name, "case": what, "numba_s": times[True],
                     "numpy_s": times[False], "speedup": times[False] / times[True]})
    print(f"{'kernel':<22} {'numba':>10} {'numpy':>10} {'speedup':>8}  case")
    for r in rows:
        print(f"{r['kernel']:<22} {r['numba_s'] * 1e3:>8.2f}ms {r['numpy_s'] * 1e3:>8.2f}ms "
              f"{r['speedup']:>7.1f}x  {r['case']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()

"""Command-line entry point: instrument, simulate, reconstruct, report.

Every command writes ``run_meta.json`` (arguments, seed and a hash of the
configuration) and ``timing.json`` (wall time) next to its outputs. Only
``timing.json`` varies between identical runs.

Exit codes: 0 success, 2 invalid input or missing file, 3 brute-force
budget exceeded, 4 too few points for registration.
"""
import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__, curtain, export, instrument, layout, monitor, plcsim, recon
from .errors import (BudgetExceeded, EmptyTimeline, InsufficientPoints, ParseError,
                     ValidationError)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3
EXIT_POINTS = 4

SWEEP_MIN_RANGE = 0.3


def resolve_scenario(name):
    """Load a scenario file, falling back to a bundled fixture of that name."""
    if os.path.isfile(name):
        return layout.load_scenario(name)
    fixture = layout.fixture_path(name if name.endswith(".json") else name + ".json")
    if os.path.isfile(fixture):
        return layout.load_scenario(fixture)
    raise FileNotFoundError(f"scenario file not found: {name}")


def _canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _meta_args(args):
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_run_meta(out, command, args, scenario=None):
    scenario_hash = None
    if scenario is not None:
        scenario_hash = hashlib.sha256(
            _canonical(layout.scenario_to_dict(scenario)).encode()).hexdigest()
    cfg = {"command": command, "args": _meta_args(args), "scenario_sha256": scenario_hash,
           "version": __version__}
    cfg["config_hash"] = hashlib.sha256(_canonical(cfg).encode()).hexdigest()
    export.write_json(cfg, os.path.join(out, "run_meta.json"))


def write_timing(out, started, **extra):
    doc = {"wall_time_s": round(time.perf_counter() - started, 6), **extra}
    export.write_json(doc, os.path.join(out, "timing.json"))


# ------------------------------------------------------------ instrument

def cmd_instrument(args):
    started = time.perf_counter()
    sc = resolve_scenario(args.scenario)
    m = args.plcs or sc.plc_count
    fov = math.radians(args.fov_deg) if args.fov_deg is not None else None
    options = instrument.ScoringOptions.from_scenario(sc, fov=fov, occlusion=args.occlusion)
    if args.brute_force:
        best = instrument.brute_force_search(sc, m, options, budget=args.budget)
        method = "brute_force"
    else:
        best = instrument.sample_search(sc, m, args.samples, args.seed, options)
        method = "sampling"
    os.makedirs(args.out, exist_ok=True)
    report = export.placement_report(sc, best, method)
    report["options"] = {"fov_rad": round(options.fov, 9), "max_range_m": options.max_range,
                         "occlusion": options.occlusion}
    export.write_json(report, os.path.join(args.out, "placement.json"))
    if not args.no_svg:
        export.write_svg(export.placement_svg(sc, best.poses, best.score, fov=options.fov),
                         os.path.join(args.out, "layout.svg"))
    write_run_meta(args.out, "instrument", args, sc)
    write_timing(args.out, started, search_wall_time_s=round(best.wall_time_s, 6))
    print(f"{sc.name}: {method} with {m} PLCs, coverage "
          f"{report['coverage_percent']:.1f}% ({len(report['observed_vertices'])}/"
          f"{report['total_vertices']}), angle sum {report['angle_sum']:.4f}")
    return EXIT_OK


# -------------------------------------------------------------- simulate

def _latency_doc(timelines):
    try:
        rep = monitor.latency_report(timelines)
    except EmptyTimeline:
        return {"episodes": 0, "median_ms": None}
    episodes = rep.pop("episodes")
    order = [k for k in monitor.EVENT_KINDS if k in rep]
    return {"episodes": episodes, "median_ms": {k: float(rep[k]) for k in order}}


def cmd_simulate(args):
    started = time.perf_counter()
    sc = resolve_scenario(args.scenario)
    timing = sc.timing
    if args.persistence is not None:
        if args.persistence < 1:
            raise ValidationError("persistence", "must be at least 1")
        timing = replace(timing, persistence_frames=args.persistence)
    if args.duration is not None and args.duration < 0:
        raise ValidationError("duration", "must not be negative")
    os.makedirs(args.out, exist_ok=True)

    on_frame = None
    if args.profiles:
        prof_dir = os.path.join(args.out, "profiles")
        os.makedirs(prof_dir, exist_ok=True)

        def on_frame(k, profiles):
            for j, prof in enumerate(profiles):
                curtain.write_profile_csv(prof, os.path.join(prof_dir, f"f{k:05d}_plc{j}.csv"))

    if args.trials > 1:
        timelines = monitor.latency_trials(sc, args.mode, args.trials, args.seed,
                                           duration=args.duration, timing=timing)
    else:
        duration = args.duration
        if duration is None:
            rate = sc.sensor.dynamic_frame_rate if args.mode == monitor.DYNAMIC_MODE \
                else sc.sensor.frame_rate
            last = max((o.trajectory[-1][0] for o in sc.obstacles), default=1.0)
            duration = last + 4.0 / rate + 1.0
        timelines = [monitor.run_pipeline(sc, duration, args.mode, seed=args.seed,
                                          timing=timing, on_frame=on_frame)]
    timelines[0].dump(os.path.join(args.out, "timeline.json"))
    for i, tl in enumerate(timelines[1:], start=1):
        tl.dump(os.path.join(args.out, f"timeline_{i:03d}.json"))
    lat = _latency_doc(timelines)
    stops = sum(len(tl.of_kind(monitor.STOP_ISSUED)) for tl in timelines)
    lat.update({"mode": args.mode, "trials": len(timelines), "stop_events": stops})
    export.write_json(lat, os.path.join(args.out, "latency.json"))
    write_run_meta(args.out, "simulate", args, sc)
    write_timing(args.out, started)
    med = lat["median_ms"]
    if med is None:
        print(f"{sc.name}: {args.mode}, {stops} stop events, no intrusion episodes")
    else:
        print(f"{sc.name}: {args.mode}, {lat['episodes']} episodes, medians "
              + ", ".join(f"{k} {v:.0f} ms" for k, v in med.items()))
    return EXIT_OK


# ----------------------------------------------------------- reconstruct

def cmd_reconstruct(args):
    started = time.perf_counter()
    sc = resolve_scenario(args.scenario)
    if not sc.plcs:
        raise ValidationError("plcs", "reconstruction needs fixed PLC poses")
    if not args.sweep_interval > 0:
        raise ValidationError("sweep_interval", "must be positive")
    os.makedirs(args.out, exist_ok=True)
    ws = sc.workspace
    clouds = []
    for j, mount in enumerate(sc.plcs):
        plc = curtain.PlcModel.from_scenario(sc, mount.pose)
        d_max = min(plc.max_range, math.hypot(ws.width, ws.height))
        merged = recon.sweep_merge(sc, plc, SWEEP_MIN_RANGE, d_max, args.sweep_interval)
        plcsim.write_pgm(merged.intensity, os.path.join(args.out, f"merged_plc{j}.pgm"))
        # the sensor only knows where it believes it is mounted
        believed = curtain.PlcModel.from_scenario(sc, mount.calibrated)
        cloud = recon.backproject(merged, believed)
        if args.filter:
            cloud = recon.filter_cloud(cloud)
        recon.write_ply(cloud, os.path.join(args.out, f"cloud_plc{j}.ply"))
        clouds.append(cloud)

    report = {"scenario": sc.name, "sweep_interval_m": args.sweep_interval,
              "points": [len(c) for c in clouds], "registrations": []}
    aligned = [clouds[0]]
    if all(len(c) == 0 for c in clouds):
        print("warning: every cloud is empty; nothing to register", file=sys.stderr)
        aligned = clouds[:1]
    elif len(clouds) == 1:
        report["note"] = "single PLC, registration skipped"
    else:
        for j, cloud in enumerate(clouds[1:], start=1):
            res = recon.register_coarse_to_fine(cloud, clouds[0])
            aligned.append(cloud.transformed(res.transform))
            report["registrations"].append({
                "source": j, "target": 0,
                "rotation": np.round(res.transform.rotation, 9).tolist(),
                "translation_m": np.round(res.transform.translation, 9).tolist(),
                "angle_deg": round(math.degrees(res.transform.angle()), 6),
                "rmse_m": round(float(res.rmse), 9),
                "mean_residual_m": round(float(res.mean_residual), 9),
                "iterations": int(res.iterations), "converged": bool(res.converged)})
    combined = recon.PointCloud.concat(aligned)
    recon.write_ply(combined, os.path.join(args.out, "combined.ply"))
    report["combined_points"] = len(combined)
    export.write_json(report, os.path.join(args.out, "icp_report.json"))
    write_run_meta(args.out, "reconstruct", args, sc)
    write_timing(args.out, started)
    for r in report["registrations"]:
        print(f"PLC {r['source']} -> PLC {r['target']}: rmse {r['rmse_m'] * 1000:.2f} mm, "
              f"{r['iterations']} iterations")
    print(f"{sc.name}: {len(combined)} points in combined cloud")
    return EXIT_OK


# ---------------------------------------------------------------- report

def _summarize(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "events" in doc:
        tl = monitor.EventTimeline.from_dict(doc)
        return "timeline", tl
    if "angle_sum" in doc:
        return "placement", doc
    if "registrations" in doc:
        return "reconstruction", doc
    raise ParseError(f"{path}: not a timeline, placement or reconstruction report")


def cmd_report(args):
    started = time.perf_counter()
    timelines = []
    lines = []
    summary = {"inputs": [os.path.basename(p) for p in args.inputs]}
    for path in args.inputs:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"input file not found: {path}")
        kind, doc = _summarize(path)
        if kind == "timeline":
            timelines.append(doc)
        elif kind == "placement":
            lines.append(f"{os.path.basename(path)}: {doc['coverage_percent']:.1f}% coverage, "
                         f"angle sum {doc['angle_sum']:.4f}")
            summary.setdefault("placements", []).append(
                {k: doc[k] for k in ("scenario", "coverage_percent", "angle_sum")})
        else:
            for r in doc["registrations"]:
                lines.append(f"{os.path.basename(path)}: PLC {r['source']} rmse "
                             f"{r['rmse_m'] * 1000:.2f} mm")
            summary.setdefault("reconstructions", []).append(doc)
    if timelines:
        lat = _latency_doc(timelines)
        lat["stop_events"] = sum(len(tl.of_kind(monitor.STOP_ISSUED)) for tl in timelines)
        summary["latency"] = lat
        if lat["median_ms"] is None:
            lines.append(f"{len(timelines)} timelines, no intrusion episodes")
        else:
            lines.append(f"{len(timelines)} timelines, {lat['episodes']} episodes: "
                         + ", ".join(f"{k} {v:.0f} ms" for k, v in lat["median_ms"].items()))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        export.write_json(summary, os.path.join(args.out, "report.json"))
        write_run_meta(args.out, "report", args)
        write_timing(args.out, started)
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="plcsafe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--scenario", required=True,
                        help="scenario JSON file or the name of a bundled fixture")
        sp.add_argument("--out", default="out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("instrument", help="choose PLC poses that envelope the robots")
    common(sp)
    sp.add_argument("--plcs", type=int, default=None, help="PLC count (default: scenario)")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--brute-force", action="store_true")
    sp.add_argument("--budget", type=int, default=instrument.DEFAULT_BUDGET)
    sp.add_argument("--occlusion", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--fov-deg", type=float, default=None)
    sp.add_argument("--no-svg", action="store_true")
    sp.set_defaults(func=cmd_instrument)

    sp = sub.add_parser("simulate", help="run the detect-and-stop pipeline")
    common(sp)
    sp.add_argument("--mode", choices=(monitor.PLANAR_MODE, monitor.DYNAMIC_MODE),
                    default=monitor.PLANAR_MODE)
    sp.add_argument("--duration", type=float, default=None, help="seconds")
    sp.add_argument("--persistence", type=int, default=None, help="frames (k)")
    sp.add_argument("--trials", type=int, default=1,
                    help="randomized intrusion phases; more than one pools latencies")
    sp.add_argument("--profiles", action="store_true", help="write per-frame curtain CSVs")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct", help="sweep, back-project and register clouds")
    common(sp, seed=False)
    sp.add_argument("--sweep-interval", type=float, default=0.01, help="meters")
    sp.add_argument("--filter", action="store_true", help="statistical outlier removal")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("report", help="summarize timelines and reports")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InsufficientPoints as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_POINTS


if __name__ == "__main__":
    sys.exit(main())

"""Report serialization and a top-down SVG of a PLC placement.

Everything written here is a pure function of its inputs (no timestamps),
so repeated runs produce byte-identical files.
"""
import json
import math

import numpy as np

from .instrument import coverage_percentage

OBSERVED = "#2e9e44"
HIDDEN = "#d03a2f"
ROBOT_FILL = "#c9ced6"
EDGE = "#1f5fbf"
PLC = "#f0a020"


def _r(v, nd=6):
    return round(float(v), nd)


def placement_report(scenario, best, method):
    """JSON-ready summary of a search result."""
    score = best.score
    vertices = sorted([rid, int(i)] for rid, i in score.observed_vertices)
    return {
        "scenario": scenario.name,
        "method": method,
        "plcs": [{"x_m": _r(p.x), "y_m": _r(p.y), "theta_rad": _r(p.theta)} for p in best.poses],
        "grid_indices": [list(t) for t in best.grid_indices],
        "angle_sum": _r(score.angle_sum, 9),
        "observed_vertices": vertices,
        "total_vertices": 4 * len(scenario.robots),
        "coverage_percent": _r(coverage_percentage(score, scenario), 4),
        "fully_enveloped_robots": score.full_coverage_bonus_count,
        "counted_edges": [{"plc": j, "robot_id": rid, "vertices": list(e), "angle_rad": _r(a, 9)}
                          for j, rid, e, a in score.counted_edges],
        "samples_evaluated": int(best.samples_evaluated),
        "seed": best.seed,
    }


def write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    return f"{v:.4f}".rstrip("0").rstrip(".")


def placement_svg(scenario, poses, score=None, fov=None, wedge=None, px_per_m=60):
    """Top-down figure: robots, vertex visibility, counted edges, PLC wedges."""
    ws = scenario.workspace
    pad = 0.3
    w = ws.width + 2 * pad
    h = ws.height + 2 * pad
    fov = scenario.sensor.fov if fov is None else fov
    wedge = 0.25 * max(ws.width, ws.height) if wedge is None else wedge

    def xy(x, y):
        # SVG y grows downward
        return _fmt(x - ws.min_x + pad), _fmt(ws.max_y - y + pad)

    seen = set(score.observed_vertices) if score is not None else set()
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w * px_per_m)}" '
           f'height="{_fmt(h * px_per_m)}" viewBox="0 0 {_fmt(w)} {_fmt(h)}">',
           f'<title>{scenario.name}</title>']
    x0, y0 = xy(ws.min_x, ws.max_y)
    out.append(f'<rect x="{x0}" y="{y0}" width="{_fmt(ws.width)}" height="{_fmt(ws.height)}" '
               'fill="white" stroke="black" stroke-width="0.03"/>')
    for j, p in enumerate(poses):
        a0, a1 = p.theta - fov / 2, p.theta + fov / 2
        cx, cy = xy(p.x, p.y)
        ax, ay = xy(p.x + wedge * math.cos(a0), p.y + wedge * math.sin(a0))
        bx, by = xy(p.x + wedge * math.cos(a1), p.y + wedge * math.sin(a1))
        large = 1 if fov > math.pi else 0
        out.append(f'<path d="M {cx} {cy} L {ax} {ay} A {_fmt(wedge)} {_fmt(wedge)} 0 {large} 0 '
                   f'{bx} {by} Z" fill="{PLC}" fill-opacity="0.2" stroke="{PLC}" '
                   'stroke-width="0.02"/>')
    for r in scenario.robots:
        pts = " ".join(",".join(xy(x, y)) for x, y in r.vertices)
        out.append(f'<polygon points="{pts}" fill="{ROBOT_FILL}" stroke="black" '
                   f'stroke-width="0.02"><title>{r.id}</title></polygon>')
    if score is not None:
        verts = {r.id: np.asarray(r.vertices) for r in scenario.robots}
        for _, rid, (va, vb), _ in score.counted_edges:
            (ax, ay), (bx, by) = xy(*verts[rid][va]), xy(*verts[rid][vb])
            out.append(f'<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" stroke="{EDGE}" '
                       'stroke-width="0.06"/>')
    for r in scenario.robots:
        for i, (x, y) in enumerate(r.vertices):
            cx, cy = xy(x, y)
            color = OBSERVED if (r.id, i) in seen else HIDDEN
            out.append(f'<circle cx="{cx}" cy="{cy}" r="0.07" fill="{color}"/>')
    for j, p in enumerate(poses):
        cx, cy = xy(p.x, p.y)
        out.append(f'<circle cx="{cx}" cy="{cy}" r="0.12" fill="{PLC}" stroke="black" '
                   'stroke-width="0.02"/>')
        out.append(f'<text x="{cx}" y="{cy}" dy="-0.2" font-size="0.3" '
                   f'text-anchor="middle">PLC {j + 1}</text>')
    if score is not None:
        tx, ty = xy(ws.min_x, ws.min_y)
        out.append(f'<text x="{tx}" y="{ty}" dy="0.25" font-size="0.22">'
                   f'{coverage_percentage(score, scenario):.1f}% of vertices visible</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)

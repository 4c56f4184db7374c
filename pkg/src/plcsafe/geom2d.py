"""Planar geometry kernel: hulls, ray casting, angles and visibility tests.

Points are ``(x, y)`` pairs in meters, polygons are ``(n, 2)`` float arrays
with counter-clockwise vertex order. Every function here is pure.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateInput

EPS = 1e-9  # on-boundary tolerance, meters
_CROSS_TOL = 1e-12


def as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected points of shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def signed_area(poly):
    p = np.asarray(poly, dtype=np.float64)
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple(poly):
    p = np.asarray(poly, dtype=np.float64)
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, p[j], p[(j + 1) % n]):
                return False
    return True


def as_polygon(vertices):
    """Validate a vertex list and return it as a CCW ``(n, 2)`` array."""
    p = as_points(vertices)
    if len(p) < 3:
        raise DegenerateInput("a polygon needs at least 3 vertices")
    area = signed_area(p)
    if abs(area) <= EPS * EPS:
        raise DegenerateInput("polygon has zero area")
    if not is_simple(p):
        raise DegenerateInput("polygon is self-intersecting")
    if area < 0:
        p = p[::-1].copy()
    return p


def is_convex(poly, tol=_CROSS_TOL):
    p = np.asarray(poly, dtype=np.float64)
    e = np.roll(p, -1, axis=0) - p
    f = np.roll(e, -1, axis=0)
    cross = e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0]
    return bool(np.all(cross >= -tol)) and signed_area(p) > 0


# ------------------------------------------------------------------ hulls

def _cross(o, a, b):
    return (a[..., 0] - o[0]) * (b[..., 1] - o[1]) - (a[..., 1] - o[1]) * (b[..., 0] - o[0])


def _quickhull_side(pts, a, b, out):
    # pts lie strictly right of a->b; appends the CCW hull vertices between a and b
    if len(pts) == 0:
        return
    d = -_cross(a, b, pts)
    far = pts[int(np.argmax(d))]
    right_af = pts[_cross(a, far, pts) < -_CROSS_TOL]
    right_fb = pts[_cross(far, b, pts) < -_CROSS_TOL]
    _quickhull_side(right_af, a, far, out)
    out.append(far)
    _quickhull_side(right_fb, far, b, out)


def convex_hull(points):
    """Quickhull. Returns the CCW hull starting at the lowest-x vertex.

    Collinear boundary points are dropped.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateInput("convex hull needs at least 3 points")
    pts = np.unique(pts, axis=0)  # also sorts lexicographically
    a, b = pts[0], pts[-1]
    d = _cross(a, b, pts)
    upper = pts[d > _CROSS_TOL]
    lower = pts[d < -_CROSS_TOL]
    if len(upper) == 0 and len(lower) == 0:
        raise DegenerateInput("all points are collinear")
    hull = [a]
    _quickhull_side(lower, a, b, hull)
    hull.append(b)
    _quickhull_side(upper, b, a, hull)
    return np.array(hull)


# -------------------------------------------------------------- distances

def point_segment_distance(p, a, b):
    p = np.asarray(p, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.hypot(*(p - a - t * ab)))


def boundary_distance(points, poly):
    """Unsigned distance from each point to the polygon boundary."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = np.asarray(poly, dtype=np.float64)
    ab = np.roll(a, -1, axis=0) - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("nij,ij->ni", ap, ab) / denom, 0.0, 1.0)
    diff = ap - t[..., None] * ab[None]
    return np.sqrt(np.min(np.einsum("nij,nij->ni", diff, diff), axis=1))


def contains(poly, points, tol=EPS):
    """Inside-or-on test for convex CCW polygons."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = np.asarray(poly, dtype=np.float64)
    e = np.roll(a, -1, axis=0) - a
    lens = np.hypot(e[:, 0], e[:, 1])
    # signed distance to each edge line, positive outside
    w = pts[:, None, :] - a[None]
    out = (w[..., 0] * e[:, 1] - w[..., 1] * e[:, 0]) / lens
    return np.all(out <= tol, axis=1)


def signed_distance(poly, points):
    """Signed distance to a convex polygon, negative inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = boundary_distance(pts, poly)
    return np.where(contains(poly, pts, tol=0.0), -d, d)


# ------------------------------------------------------------------- rays

@dataclass(frozen=True)
class Ray2:
    origin: tuple
    heading: float

    @property
    def direction(self):
        return (math.cos(self.heading), math.sin(self.heading))


def ray_polygon_entry(ray, poly):
    """Smallest ``t >= 0`` where the ray meets the polygon boundary, or None."""
    o = np.asarray(ray.origin, dtype=np.float64).reshape(1, 2)
    d = np.asarray(ray.direction, dtype=np.float64).reshape(1, 2)
    t = float(_kernels.ray_entry(o, d, np.asarray(poly, dtype=np.float64))[0])
    return None if math.isinf(t) else t


def subtended_angle(viewpoint, a, b):
    v = np.asarray(viewpoint, dtype=np.float64)
    u = np.asarray(a, dtype=np.float64) - v
    w = np.asarray(b, dtype=np.float64) - v
    if not (np.any(u) and np.any(w)):
        raise DegenerateInput("edge endpoint coincides with the viewpoint")
    cross = u[0] * w[1] - u[1] * w[0]
    dot = u[0] * w[0] + u[1] * w[1]
    return math.atan2(abs(cross), dot)


def wrap_angle(a):
    """Map an angle (or array of angles) into ``(-pi, pi]``."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)
    return float(w) if np.ndim(w) == 0 else w


def in_fov(sensor, fov, max_range, p):
    if not 0.0 < fov <= 2.0 * math.pi:
        raise ValueError("fov must lie in (0, 2*pi]")
    sx, sy, theta = sensor
    dx = p[0] - sx
    dy = p[1] - sy
    if math.hypot(dx, dy) > max_range:
        return False
    bearing = wrap_angle(math.atan2(dy, dx) - theta)
    return abs(bearing) <= 0.5 * fov + 1e-12


def segment_occluded(a, b, blockers):
    """True when the open segment a-b passes through a blocker's interior.

    Blockers must be convex; touching an edge or a vertex does not count.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        raise DegenerateInput("segment endpoints coincide")
    if len(blockers) == 0:
        return False
    polys = np.stack([np.asarray(p, dtype=np.float64) for p in blockers]) \
        if len({len(p) for p in blockers}) == 1 else None
    if polys is None:
        return any(bool(segments_hit_interior(a[None], b[None], np.asarray(p))[0])
                   for p in blockers)
    hits = segments_hit_interior(a[None, None], b[None, None], polys[None])
    return bool(hits.any())


def segments_hit_interior(a, b, polys, tol=1e-9):
    """Vectorised Cyrus-Beck clip of segments against convex polygons.

    ``a`` and ``b`` broadcast against ``polys[..., V, 2]`` minus the vertex
    axis. Returns True where the clipped parameter interval has positive
    length, i.e. the segment enters the open interior.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = np.asarray(polys, dtype=np.float64)
    e = np.roll(p, -1, axis=-2) - p
    # outward normals of CCW edges
    nx = e[..., 1]
    ny = -e[..., 0]
    d = (b - a)[..., None, :]
    w = a[..., None, :] - p
    num = w[..., 0] * nx + w[..., 1] * ny          # >0: a outside this edge
    den = d[..., 0] * nx + d[..., 1] * ny
    scale = np.hypot(nx, ny)
    num = num / scale
    den = den / scale
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -num / den
    entering = den < 0
    leaving = den > 0
    t_in = np.max(np.where(entering, t, 0.0), axis=-1)
    t_out = np.min(np.where(leaving, t, 1.0), axis=-1)
    t_in = np.maximum(t_in, 0.0)
    t_out = np.minimum(t_out, 1.0)
    # segment parallel to an edge and on/outside its line never enters
    parallel_out = np.any((den == 0) & (num >= -tol), axis=-1)
    seg_len = np.hypot(d[..., 0, 0], d[..., 0, 1])
    return ~parallel_out & ((t_out - t_in) * seg_len > tol)


def offset_convex(poly, d):
    """Mitered outward offset of a convex polygon by distance ``d``.

    Every edge moves out along its normal by ``d``; new vertices sit at the
    intersections of neighbouring shifted edges.
    """
    p = np.asarray(poly, dtype=np.float64)
    if d < 0:
        raise ValueError("offset must be non-negative")
    if not is_convex(p):
        raise DegenerateInput("offset_convex requires a convex CCW polygon")
    if d == 0:
        return p.copy()
    e = np.roll(p, -1, axis=0) - p
    lens = np.hypot(e[:, 0], e[:, 1])
    n = np.stack([e[:, 1], -e[:, 0]], axis=1) / lens[:, None]
    c = np.einsum("ij,ij->i", n, p) + d
    n_prev = np.roll(n, 1, axis=0)
    c_prev = np.roll(c, 1, axis=0)
    det = n_prev[:, 0] * n[:, 1] - n_prev[:, 1] * n[:, 0]
    out = np.empty_like(p)
    regular = np.abs(det) > 1e-12
    out[regular, 0] = (c_prev * n[:, 1] - c * n_prev[:, 1])[regular] / det[regular]
    out[regular, 1] = (n_prev[:, 0] * c - n[:, 0] * c_prev)[regular] / det[regular]
    out[~regular] = p[~regular] + d * n[~regular]
    return out


def polygon_area(poly):
    return abs(signed_area(poly))

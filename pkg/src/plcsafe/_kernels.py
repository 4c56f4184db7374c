"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public wrappers at the bottom dispatch on ``_accel.USE_NUMBA``. Both
flavours are kept bit-compatible: floating point accumulations happen in the
same order so scores agree exactly across backends.
"""
import numpy as np

from . import _accel
from ._accel import njit

_PARAM_TOL = 1e-12


# ---------------------------------------------------------------- ray casting

@njit
def _ray_entry_nb(origins, dirs, polys):
    n = origins.shape[0]
    nv = polys.shape[1]
    out = np.full(n, np.inf)
    for i in range(n):
        ox = origins[i, 0]
        oy = origins[i, 1]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        best = np.inf
        for j in range(nv):
            px = polys[i, j, 0]
            py = polys[i, j, 1]
            k = j + 1
            if k == nv:
                k = 0
            ex = polys[i, k, 0] - px
            ey = polys[i, k, 1] - py
            wx = px - ox
            wy = py - oy
            denom = dx * ey - dy * ex
            if abs(denom) > 1e-15:
                t = (wx * ey - wy * ex) / denom
                s = (wx * dy - wy * dx) / denom
                if t >= 0.0 and s >= -_PARAM_TOL and s <= 1.0 + _PARAM_TOL:
                    if t < best:
                        best = t
            elif abs(wx * dy - wy * dx) <= 1e-15:
                # collinear edge: nearest overlapping endpoint
                tp = wx * dx + wy * dy
                tq = tp + ex * dx + ey * dy
                lo = min(tp, tq)
                hi = max(tp, tq)
                if hi >= 0.0:
                    t = max(lo, 0.0)
                    if t < best:
                        best = t
        out[i] = best
    return out


def _ray_entry_np(origins, dirs, polys):
    p = polys
    e = np.roll(polys, -1, axis=1) - polys
    o = origins[:, None, :]
    d = dirs[:, None, :]
    w = p - o
    denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    wxe = w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]
    wxd = w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]
    regular = np.abs(denom) > 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        t = wxe / denom
        s = wxd / denom
    hit = regular & (t >= 0.0) & (s >= -_PARAM_TOL) & (s <= 1.0 + _PARAM_TOL)
    cand = np.where(hit, t, np.inf)

    collinear = ~regular & (np.abs(wxd) <= 1e-15)
    if collinear.any():
        tp = w[..., 0] * d[..., 0] + w[..., 1] * d[..., 1]
        tq = tp + e[..., 0] * d[..., 0] + e[..., 1] * d[..., 1]
        lo = np.minimum(tp, tq)
        hi = np.maximum(tp, tq)
        ct = np.where(collinear & (hi >= 0.0), np.maximum(lo, 0.0), np.inf)
        cand = np.minimum(cand, ct)
    return cand.min(axis=1)


# ------------------------------------------------------- placement scoring

@njit
def _score_tuple_nb(va, vb, ang, valid, poses, obs, bonus):
    n_robots = va.shape[1]
    obs[:, :] = False
    acc = 0.0
    for m in range(poses.shape[0]):
        p = poses[m]
        for r in range(n_robots):
            if valid[p, r]:
                a = va[p, r]
                b = vb[p, r]
                if not (obs[r, a] and obs[r, b]):
                    acc += ang[p, r]
                    obs[r, a] = True
                    obs[r, b] = True
    for r in range(n_robots):
        if obs[r, 0] and obs[r, 1] and obs[r, 2] and obs[r, 3]:
            acc += bonus
    return acc


@njit
def _combine_nb(va, vb, ang, valid, idx, bonus):
    n_samples = idx.shape[0]
    out = np.empty(n_samples)
    obs = np.zeros((va.shape[1], 4), dtype=np.bool_)
    for s in range(n_samples):
        out[s] = _score_tuple_nb(va, vb, ang, valid, idx[s], obs, bonus)
    return out


def _combine_np(va, vb, ang, valid, idx, bonus):
    n_samples, n_plcs = idx.shape
    n_robots = va.shape[1]
    obs = np.zeros((n_samples, n_robots, 4), dtype=bool)
    acc = np.zeros(n_samples)
    rows = np.arange(n_samples)[:, None]
    cols = np.arange(n_robots)[None, :]
    for m in range(n_plcs):
        p = idx[:, m]
        a = va[p]
        b = vb[p]
        seen = obs[rows, cols, a] & obs[rows, cols, b]
        add = valid[p] & ~seen
        angles = ang[p]
        for r in range(n_robots):
            acc += np.where(add[:, r], angles[:, r], 0.0)
        obs[rows, cols, a] |= add
        obs[rows, cols, b] |= add
    full = obs.all(axis=2)
    for r in range(n_robots):
        acc += np.where(full[:, r], bonus, 0.0)
    return acc


@njit
def _brute_force_nb(va, vb, ang, valid, n_plcs, bonus):
    n_poses = va.shape[0]
    total = n_poses ** n_plcs
    digits = np.zeros(n_plcs, dtype=np.int64)
    obs = np.zeros((va.shape[1], 4), dtype=np.bool_)
    best_score = -np.inf
    best_k = 0
    for k in range(total):
        rem = k
        for m in range(n_plcs - 1, -1, -1):
            digits[m] = rem % n_poses
            rem //= n_poses
        score = _score_tuple_nb(va, vb, ang, valid, digits, obs, bonus)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k, best_score


def _brute_force_np(va, vb, ang, valid, n_plcs, bonus, block=1 << 16):
    n_poses = va.shape[0]
    total = n_poses ** n_plcs
    best_score = -np.inf
    best_k = 0
    for start in range(0, total, block):
        k = np.arange(start, min(start + block, total), dtype=np.int64)
        idx = np.empty((k.size, n_plcs), dtype=np.int64)
        rem = k.copy()
        for m in range(n_plcs - 1, -1, -1):
            idx[:, m] = rem % n_poses
            rem //= n_poses
        scores = _combine_np(va, vb, ang, valid, idx, bonus)
        j = int(np.argmax(scores))
        if scores[j] > best_score:
            best_score = float(scores[j])
            best_k = int(k[j])
    return best_k, best_score


# ----------------------------------------------------------------- dispatch

def ray_entry(origins, dirs, polys, use_numba=None):
    """Range to the first boundary crossing of each ray with its polygon.

    ``origins`` and ``dirs`` are (N, 2); ``polys`` is (N, V, 2) or (V, 2)
    (broadcast to every ray). Misses are ``inf``.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    polys = np.asarray(polys, dtype=np.float64)
    if polys.ndim == 2:
        polys = np.broadcast_to(polys, (origins.shape[0],) + polys.shape)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return _ray_entry_nb(origins, dirs, np.ascontiguousarray(polys))
    return _ray_entry_np(origins, dirs, polys)


def combine_scores(table, idx, bonus, use_numba=None):
    va, vb, ang, valid = table
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return _combine_nb(va, vb, ang, valid, idx, bonus)
    return _combine_np(va, vb, ang, valid, idx, bonus)


def brute_force(table, n_plcs, bonus, use_numba=None):
    va, vb, ang, valid = table
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        k, score = _brute_force_nb(va, vb, ang, valid, n_plcs, bonus)
        return int(k), float(score)
    return _brute_force_np(va, vb, ang, valid, n_plcs, bonus)

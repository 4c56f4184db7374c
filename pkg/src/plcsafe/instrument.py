"""PLC placement: coverage scoring, random sampling search and brute force.

A joint configuration of M PLC poses is scored by walking the PLCs in order.
For every robot a PLC can see, the edge between the robot's two nearest
corners contributes its subtended angle, unless both corners were already
claimed by an earlier PLC. After all PLCs, each robot with all four corners
claimed earns a flat bonus.

The per-PLC part of that walk depends only on the PLC's own pose, so it is
tabulated once per grid pose (:func:`pose_table`); the sequential claim
bookkeeping runs in the compiled kernels of :mod:`plcsafe._kernels`.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geom2d
from .errors import BudgetExceeded
from .layout import Pose2D

FULL_COVERAGE_BONUS = 10.0
DEFAULT_BUDGET = 10 ** 9
SAMPLE_CHUNK = 1 << 15


@dataclass(frozen=True)
class ScoringOptions:
    fov: float = math.pi / 2
    max_range: float = 30.0
    occlusion: bool = False

    @classmethod
    def from_scenario(cls, scenario, **overrides):
        s = scenario.sensor
        kw = dict(fov=s.fov, max_range=s.max_range, occlusion=s.occlusion)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass(frozen=True)
class CoverageScore:
    angle_sum: float
    observed_vertices: frozenset = frozenset()
    counted_edges: tuple = ()  # (plc index, robot id, (va, vb), angle)
    full_coverage_bonus_count: int = 0


@dataclass(frozen=True)
class BestConfig:
    poses: tuple
    score: CoverageScore
    samples_evaluated: int
    seed: int = None
    grid_indices: tuple = ()
    wall_time_s: float = field(default=0.0, compare=False)


def pose_table(robots, poses, options):
    """Per-pose, per-robot nearest-edge data.

    ``robots`` is (R, 4, 2) and ``poses`` (P, 3). Returns ``(va, vb, angle,
    valid)``, each (P, R): the indices of the two nearest corners (nearest
    first, lower index on ties), their subtended angle, and whether the edge
    counts from that pose at all.
    """
    robots = np.asarray(robots, dtype=np.float64)
    poses = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    n_poses = poses.shape[0]
    n_robots = robots.shape[0]
    va = np.zeros((n_poses, n_robots), dtype=np.int64)
    vb = np.zeros((n_poses, n_robots), dtype=np.int64)
    ang = np.zeros((n_poses, n_robots))
    valid = np.zeros((n_poses, n_robots), dtype=bool)
    if n_robots == 0:
        return va, vb, ang, valid
    chunk = max(1, 200_000 // (n_robots * 4))
    for lo in range(0, n_poses, chunk):
        hi = min(n_poses, lo + chunk)
        out = _pose_table_chunk(robots, poses[lo:hi], options)
        va[lo:hi], vb[lo:hi], ang[lo:hi], valid[lo:hi] = out
    return va, vb, ang, valid


def _pose_table_chunk(robots, poses, options):
    n_robots = robots.shape[0]
    sx = poses[:, 0][:, None, None]
    sy = poses[:, 1][:, None, None]
    heading = poses[:, 2][:, None, None]
    dx = robots[None, :, :, 0] - sx                     # (P, R, 4)
    dy = robots[None, :, :, 1] - sy
    dist = np.hypot(dx, dy)
    bearing = geom2d.wrap_angle(np.arctan2(dy, dx) - heading)
    visible = (np.abs(bearing) <= 0.5 * options.fov + 1e-12) & (dist <= options.max_range)

    order = np.argsort(dist, axis=2, kind="stable")
    va = order[..., 0]
    vb = order[..., 1]
    pick = lambda a, i: np.take_along_axis(a, i[..., None], axis=2)[..., 0]
    ux, uy = pick(dx, va), pick(dy, va)
    wx, wy = pick(dx, vb), pick(dy, vb)
    cross = ux * wy - uy * wx
    dot = ux * wx + uy * wy
    angle = np.arctan2(np.abs(cross), dot)
    nonzero = (pick(dist, va) > 0) & (pick(dist, vb) > 0)

    valid = (visible.any(axis=2) & pick(visible, va) & pick(visible, vb)
             & nonzero & (angle > 0))

    if options.occlusion and n_robots > 1:
        blocked = np.zeros_like(valid)
        origin = poses[:, None, :2]
        for which in (va, vb):
            ends = np.stack([pick(robots[None, :, :, 0].repeat(len(poses), 0), which),
                             pick(robots[None, :, :, 1].repeat(len(poses), 0), which)], axis=-1)
            # (P, R, R_blocker)
            hit = geom2d.segments_hit_interior(
                origin[:, :, None, :], ends[:, :, None, :], robots[None, None])
            hit[:, np.arange(n_robots), np.arange(n_robots)] = False
            blocked |= hit.any(axis=2)
        valid &= ~blocked
    return va, vb, angle, valid


def _poses_array(poses):
    return np.array([tuple(p) for p in poses], dtype=np.float64).reshape(-1, 3)


def score_configuration(scenario, poses, options=None):
    """Full coverage score with bookkeeping for one joint configuration."""
    if options is None:
        options = ScoringOptions.from_scenario(scenario)
    robots = scenario.robot_array()
    ids = scenario.robot_ids
    va, vb, ang, valid = pose_table(robots, _poses_array(poses), options)
    observed = set()
    edges = []
    acc = 0.0
    for m in range(len(poses)):
        for r, rid in enumerate(ids):
            if not valid[m, r]:
                continue
            a, b = int(va[m, r]), int(vb[m, r])
            if (rid, a) in observed and (rid, b) in observed:
                continue
            acc += float(ang[m, r])
            observed.add((rid, a))
            observed.add((rid, b))
            edges.append((m, rid, (min(a, b), max(a, b)), float(ang[m, r])))
    bonus = 0
    for rid in ids:
        if all((rid, k) in observed for k in range(4)):
            acc += FULL_COVERAGE_BONUS
            bonus += 1
    return CoverageScore(acc, frozenset(observed), tuple(edges), bonus)


def grid_table(scenario, options=None):
    if options is None:
        options = ScoringOptions.from_scenario(scenario)
    return pose_table(scenario.robot_array(), scenario.grid.all_poses(), options)


def _draw_chunk(rng, n_grid, n_plcs):
    return rng.integers(0, n_grid, size=(SAMPLE_CHUNK, n_plcs), dtype=np.int64)


def sample_scores(scenario, n_plcs, n, seed, options=None, table=None):
    """Scores of the first ``n`` samples of the seeded stream, in order.

    Samples are drawn in fixed-size chunks so sample ``i`` never depends on
    ``n``: a shorter run sees a prefix of a longer one.
    """
    if table is None:
        table = grid_table(scenario, options)
    rng = np.random.default_rng(seed)
    n_grid = scenario.grid.size
    out = np.empty(n)
    idx_all = np.empty((n, n_plcs), dtype=np.int64)
    for lo in range(0, n, SAMPLE_CHUNK):
        idx = _draw_chunk(rng, n_grid, n_plcs)[: min(SAMPLE_CHUNK, n - lo)]
        out[lo:lo + len(idx)] = _kernels.combine_scores(table, idx, FULL_COVERAGE_BONUS)
        idx_all[lo:lo + len(idx)] = idx
    return out, idx_all


def _config_from_indices(scenario, flat_indices, options, n_eval, seed, started):
    grid = scenario.grid
    poses = []
    triples = []
    all_poses = grid.all_poses()
    for k in flat_indices:
        x, y, t = all_poses[int(k)]
        poses.append(Pose2D(x, y, t))
        triples.append(tuple(int(v) for v in grid.unravel(int(k))))
    score = score_configuration(scenario, poses, options)
    return BestConfig(tuple(poses), score, n_eval, seed, tuple(triples),
                      time.perf_counter() - started)


def sample_search(scenario, n_plcs, n, seed, options=None):
    """Best of ``n`` uniformly random joint grid configurations.

    Ties keep the earliest sample. Deterministic for a given seed.
    """
    if n < 1 or n_plcs < 1:
        raise ValueError("need n >= 1 and at least one PLC")
    started = time.perf_counter()
    if options is None:
        options = ScoringOptions.from_scenario(scenario)
    table = grid_table(scenario, options)
    rng = np.random.default_rng(seed)
    n_grid = scenario.grid.size
    best_score = -np.inf
    best_idx = None
    for lo in range(0, n, SAMPLE_CHUNK):
        idx = _draw_chunk(rng, n_grid, n_plcs)[: min(SAMPLE_CHUNK, n - lo)]
        scores = _kernels.combine_scores(table, idx, FULL_COVERAGE_BONUS)
        j = int(np.argmax(scores))
        if scores[j] > best_score:
            best_score = scores[j]
            best_idx = idx[j].copy()
    return _config_from_indices(scenario, best_idx, options, n, seed, started)


def brute_force_search(scenario, n_plcs, options=None, budget=DEFAULT_BUDGET):
    """Exact optimum over every ordered tuple of grid poses.

    Ties keep the lexicographically smallest index tuple.
    """
    n_grid = scenario.grid.size
    total = n_grid ** n_plcs
    if total > budget:
        raise BudgetExceeded(f"{total} evaluations exceed the budget of {budget}")
    started = time.perf_counter()
    if options is None:
        options = ScoringOptions.from_scenario(scenario)
    table = grid_table(scenario, options)
    k, _ = _kernels.brute_force(table, n_plcs, FULL_COVERAGE_BONUS)
    digits = []
    for _ in range(n_plcs):
        digits.append(k % n_grid)
        k //= n_grid
    return _config_from_indices(scenario, digits[::-1], options, total, None, started)


def coverage_percentage(score, scenario):
    total = 4 * len(scenario.robots)
    if total == 0:
        return 0.0
    return 100.0 * len(score.observed_vertices) / total


def min_plcs(scenario, n, max_m, seed, options=None):
    """Smallest PLC count in [2, max_m] whose best sample covers every corner.

    Returns None when no count up to ``max_m`` reaches full coverage.
    """
    if max_m < 2:
        raise ValueError("max_m must be at least 2")
    for m in range(2, max_m + 1):
        best = sample_search(scenario, m, n, seed, options)
        if len(best.score.observed_vertices) == 4 * len(scenario.robots):
            return m
    return None

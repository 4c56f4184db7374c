import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcsafe import _kernels, instrument, layout
from plcsafe.errors import BudgetExceeded
from plcsafe.instrument import CoverageScore, ScoringOptions
from plcsafe.layout import Pose2D

from _util import scenario, square


def _open_scene(robots, lo=-1.0, hi=11.0, bins=(4, 4, 8), **extra):
    doc = {"name": "open",
           "workspace": {"min_x_m": lo, "min_y_m": lo, "max_x_m": hi, "max_y_m": hi},
           "robots": [{"id": f"R{i + 1}", "vertices_m": v} for i, v in enumerate(robots)],
           "plc_count": 1, "grid": {"x_bins": bins[0], "y_bins": bins[1], "theta_bins": bins[2]}}
    doc.update(extra)
    return layout.scenario_from_dict(doc)


def test_single_edge_score():
    sc = _open_scene([square(5.0, 0.0)])
    s = instrument.score_configuration(sc, [Pose2D(0, 0, 0)])
    assert s.angle_sum == pytest.approx(2 * math.atan(0.5 / 4.5))
    assert len(s.observed_vertices) == 2
    assert s.full_coverage_bonus_count == 0
    (plc, rid, pair, ang), = s.counted_edges
    assert rid == "R1" and 0 < ang <= math.pi


def test_nothing_in_view():
    sc = _open_scene([square(5.0, 0.0)])
    s = instrument.score_configuration(sc, [Pose2D(0, 0, math.pi)])
    assert s.angle_sum == 0.0
    assert not s.observed_vertices and not s.counted_edges


def test_opposite_plcs_earn_bonus():
    sc = _open_scene([square(5.0, 0.0)])
    s = instrument.score_configuration(sc, [Pose2D(0, 0, 0), Pose2D(10, 0, math.pi)])
    edge = 2 * math.atan(0.5 / 4.5)
    assert len(s.observed_vertices) == 4
    assert s.full_coverage_bonus_count == 1
    assert s.angle_sum == pytest.approx(2 * edge + instrument.FULL_COVERAGE_BONUS)


def test_same_edge_not_double_counted():
    sc = _open_scene([square(5.0, 0.0)])
    s = instrument.score_configuration(sc, [Pose2D(0, 0, 0), Pose2D(0.5, 0, 0)])
    assert len(s.counted_edges) == 1


def test_edge_needs_both_vertices_in_fov():
    # the robot straddles the FOV boundary: one near corner in view only
    sc = _open_scene([square(4.0, 4.3)])
    s = instrument.score_configuration(sc, [Pose2D(0, 0, 0)])
    assert s.angle_sum == 0.0


def test_occlusion_option():
    sc = _open_scene([square(3.0, 0.0), square(7.0, 0.0)])
    pose = [Pose2D(0, 0, 0)]
    off = instrument.score_configuration(sc, pose, ScoringOptions(occlusion=False))
    on = instrument.score_configuration(sc, pose, ScoringOptions(occlusion=True))
    assert {r for _, r, _, _ in off.counted_edges} == {"R1", "R2"}
    assert {r for _, r, _, _ in on.counted_edges} == {"R1"}


def test_fov_override():
    sc = _open_scene([square(2.5, 4.5)])
    pose = [Pose2D(0, 0, 0)]
    assert instrument.score_configuration(sc, pose).angle_sum == 0.0
    wide = ScoringOptions.from_scenario(sc, fov=math.radians(150))
    assert instrument.score_configuration(sc, pose, wide).angle_sum > 0


def test_coverage_percentage():
    sc = scenario([square(2 + 2 * i, 5.0, 0.3) for i in range(3)] +
                  [square(2 + 2 * i, 7.0, 0.3) for i in range(3)])
    ids = sc.robot_ids
    obs = frozenset((ids[i // 4], i % 4) for i in range(16))
    assert instrument.coverage_percentage(CoverageScore(0.0, obs), sc) == pytest.approx(66.667, abs=1e-3)
    full = frozenset((r, k) for r in ids for k in range(4))
    assert instrument.coverage_percentage(CoverageScore(0.0, full), sc) == 100.0
    assert instrument.coverage_percentage(CoverageScore(0.0), sc) == 0.0


def test_sample_search_n1_returns_first_draw():
    sc = scenario([square(5, 5)], bins=(5, 5, 8))
    best = instrument.sample_search(sc, 2, 1, seed=4)
    scores, idx = instrument.sample_scores(sc, 2, 1, 4)
    assert list(best.grid_indices) == [tuple(int(v) for v in sc.grid.unravel(int(k)))
                                       for k in idx[0]]
    assert best.score.angle_sum == pytest.approx(scores[0])
    assert best.samples_evaluated == 1


def test_sample_search_deterministic():
    sc = layout.load_fixture("three_robots")
    a = instrument.sample_search(sc, 2, 5000, seed=11)
    b = instrument.sample_search(sc, 2, 5000, seed=11)
    assert a.poses == b.poses
    assert a.score.angle_sum == b.score.angle_sum


def test_best_config_score_recomputes():
    sc = layout.load_fixture("three_robots")
    best = instrument.sample_search(sc, 2, 3000, seed=2)
    again = instrument.score_configuration(sc, best.poses)
    assert again == best.score
    scores, _ = instrument.sample_scores(sc, 2, 3000, 2)
    assert scores.max() == best.score.angle_sum


def test_prefix_monotonicity():
    sc = layout.load_fixture("three_robots")
    scores, _ = instrument.sample_scores(sc, 2, 100_000, 5)
    small = instrument.sample_search(sc, 2, 100, seed=5)
    large = instrument.sample_search(sc, 2, 100_000, seed=5)
    assert large.score.angle_sum >= small.score.angle_sum
    assert small.score.angle_sum == scores[:100].max()
    run = np.maximum.accumulate(scores)
    assert np.all(np.diff(run) >= 0)


def test_three_robots_all_near_edges_counted():
    sc = layout.load_fixture("three_robots")
    best = instrument.sample_search(sc, 2, 10_000, seed=0)
    counted = {(j, rid) for j, rid, _, _ in best.score.counted_edges}
    # every robot contributes a near edge to every PLC
    assert counted == {(j, r) for j in range(2) for r in sc.robot_ids}


def test_brute_force_single_pose():
    sc = scenario([square(5, 5)], bins=(1, 1, 1), plc_count=1)
    best = instrument.brute_force_search(sc, 1)
    assert best.poses == (Pose2D(5.0, 5.0, 0.0),)
    assert best.grid_indices == ((0, 0, 0),)


def test_brute_force_budget():
    sc = layout.load_fixture("small_grid")
    with pytest.raises(BudgetExceeded):
        instrument.brute_force_search(sc, 2, budget=10 ** 6)


def _exhaustive(sc, m):
    table = instrument.grid_table(sc)
    n = sc.grid.size
    idx = np.array(np.meshgrid(*[np.arange(n)] * m, indexing="ij")).reshape(m, -1).T
    return _kernels.combine_scores(table, idx, instrument.FULL_COVERAGE_BONUS, use_numba=False)


def test_brute_force_matches_exhaustive_enumeration():
    sc = scenario([square(2, 2, 0.4), square(4, 3, 0.4, 0.5)], size=6.0, bins=(3, 3, 4))
    for m in (1, 2):
        scores = _exhaustive(sc, m)
        best = instrument.brute_force_search(sc, m)
        assert best.score.angle_sum == pytest.approx(scores.max())
        # lexicographically first argmax
        k = int(np.argmax(scores))
        n = sc.grid.size
        digits = [(k // n ** (m - 1 - i)) % n for i in range(m)]
        assert best.grid_indices == tuple(tuple(int(v) for v in sc.grid.unravel(d)) for d in digits)


def test_min_plcs_single_robot():
    sc = scenario([square(5, 5)], bins=(10, 10, 20))
    assert instrument.min_plcs(sc, 20_000, 3, seed=0) == 2


def test_min_plcs_octagon_not_found():
    sc = layout.load_fixture("octagon_eight")
    assert instrument.min_plcs(sc, 20_000, 2, seed=0) is None


def test_min_plcs_rejects_small_max():
    sc = scenario([square(5, 5)])
    with pytest.raises(ValueError):
        instrument.min_plcs(sc, 10, 1, seed=0)


small_instance = st.tuples(
    st.integers(1, 2), st.integers(1, 2), st.integers(0, 10 ** 6),
    st.sampled_from([False, True]))


@given(small_instance)
@settings(max_examples=25, deadline=None)
def test_score_bounds_and_vertex_conservation(params):
    n_robots, m, seed, occl = params
    rng = np.random.default_rng(seed)
    robots = [square(*rng.uniform(1.5, 4.5, 2), 0.3, rng.uniform(0, 1.5)) for _ in range(n_robots)]
    sc = scenario(robots, size=6.0, bins=(3, 3, 4), sensor={"occlusion": occl})
    best = instrument.sample_search(sc, m, 50, seed)
    s = best.score
    assert 0 <= s.angle_sum <= n_robots * (math.pi * m + instrument.FULL_COVERAGE_BONUS)
    assert len(s.observed_vertices) <= 4 * n_robots
    assert 2 * len(s.counted_edges) >= len(s.observed_vertices)
    assert all(0 < a <= math.pi for _, _, _, a in s.counted_edges)

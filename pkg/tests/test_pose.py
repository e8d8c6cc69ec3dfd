import json
import math

import numpy as np
import pytest

from viewsynth.pose import (
    Pose6D,
    PoseStats,
    compute_pose_stats,
    normalize_pose,
)


def test_stats_two_poses():
    stats = compute_pose_stats(
        [Pose6D(0, 0, 0, 0, 0, 0), Pose6D(1, 2, 3, 0.1, 0.2, 0.3)]
    )
    assert np.array_equal(stats.p_min, np.zeros(6))
    assert np.allclose(stats.p_max, [1, 2, 3, 0.1, 0.2, 0.3])


def test_stats_singleton():
    p = Pose6D(0.3, -0.2, 0.1, 0.4, -0.5, 0.6)
    stats = compute_pose_stats([p])
    assert np.array_equal(stats.p_min, p.as_array())
    assert np.array_equal(stats.p_max, p.as_array())


def test_stats_matches_linear_scan_oracle():
    rng = np.random.default_rng(42)
    poses = [
        Pose6D(*rng.uniform(-0.1, 0.1, size=3), 0.0, 0.0, 0.0) for _ in range(1000)
    ]
    stats = compute_pose_stats(poses)
    # independent scalar scan
    lo = [math.inf] * 6
    hi = [-math.inf] * 6
    for p in poses:
        for i, v in enumerate(p.as_array()):
            lo[i] = min(lo[i], v)
            hi[i] = max(hi[i], v)
    assert np.array_equal(stats.p_min, np.array(lo))
    assert np.array_equal(stats.p_max, np.array(hi))


def test_stats_empty_errors():
    with pytest.raises(ValueError, match="no poses"):
        compute_pose_stats([])


def test_stats_permutation_invariant():
    rng = np.random.default_rng(7)
    poses = [Pose6D(*rng.normal(size=6)) for _ in range(50)]
    a = compute_pose_stats(poses)
    order = rng.permutation(len(poses))
    b = compute_pose_stats([poses[i] for i in order])
    assert a == b


def test_normalize_bounds_and_midpoint():
    stats = PoseStats(np.array([-1, 0, 2, -0.5, 0, 0.25]), np.array([1, 4, 3, 0.5, 1, 0.75]))
    at_min = normalize_pose(Pose6D.from_array(stats.p_min), stats)
    assert np.array_equal(at_min.values, np.zeros(6))
    mid = normalize_pose(Pose6D.from_array((stats.p_min + stats.p_max) / 2), stats)
    assert np.allclose(mid.values, 0.5)


def test_normalize_hand_example():
    stats = PoseStats(np.full(6, -0.1), np.full(6, 0.1))
    out = normalize_pose(Pose6D(0.05, -0.1, 0.0, 0.0, 0.0, 0.0), stats)
    assert np.allclose(out.values[:3], [0.75, 0.0, 0.5])
    assert not out.out_of_range


def test_normalize_rejects_nonfinite():
    with pytest.raises(ValueError, match="not finite"):
        Pose6D(float("nan"), 0, 0, 0, 0, 0)
    with pytest.raises(ValueError, match="not finite"):
        Pose6D(float("inf"), 0, 0, 0, 0, 0)


def test_normalize_in_range_stays_in_unit_cube():
    rng = np.random.default_rng(3)
    stats = PoseStats(rng.uniform(-2, 0, 6), rng.uniform(0.5, 2, 6))
    for _ in range(200):
        p = Pose6D.from_array(rng.uniform(stats.p_min, stats.p_max))
        out = normalize_pose(p, stats)
        assert np.all(out.values >= 0.0) and np.all(out.values <= 1.0)
        assert not out.out_of_range


def test_normalize_is_affine():
    rng = np.random.default_rng(11)
    stats = PoseStats(rng.uniform(-1, 0, 6), rng.uniform(0.5, 1.5, 6))
    for _ in range(50):
        a = rng.uniform(stats.p_min, stats.p_max)
        b = rng.uniform(stats.p_min, stats.p_max)
        lam = rng.uniform()
        mixed = normalize_pose(Pose6D.from_array(lam * a + (1 - lam) * b), stats)
        na = normalize_pose(Pose6D.from_array(a), stats).values
        nb = normalize_pose(Pose6D.from_array(b), stats).values
        assert np.allclose(mixed.values, lam * na + (1 - lam) * nb, atol=1e-12)


def test_degenerate_component_maps_to_half():
    stats = PoseStats(np.array([0, 0, 0, 0, 0, 0.3]), np.array([1, 1, 1, 0, 0, 0.3]))
    out = normalize_pose(Pose6D(0.25, 0.5, 1.0, 0.0, 0.0, 0.3), stats)
    assert np.allclose(out.values, [0.25, 0.5, 1.0, 0.5, 0.5, 0.5])


def test_out_of_range_flagged_not_clamped():
    stats = PoseStats(np.zeros(6), np.ones(6))
    out = normalize_pose(Pose6D(1.5, 0.5, 0.5, 0.5, 0.5, 0.5), stats)
    assert out.out_of_range
    assert out.values[0] == pytest.approx(1.5)


def test_stats_json_round_trip(tmp_path):
    stats = PoseStats(np.array([-0.1, -0.2, 0, 0, 0, -1]), np.array([0.1, 0.2, 1, 0, 2, 1]))
    path = tmp_path / "stats.json"
    stats.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"p_min", "p_max"}
    assert len(doc["p_min"]) == 6
    assert PoseStats.load(path) == stats


def test_stats_validation():
    with pytest.raises(ValueError, match="p_min"):
        PoseStats(np.ones(6), np.zeros(6))
    with pytest.raises(ValueError, match="finite"):
        PoseStats(np.full(6, -np.inf), np.zeros(6))

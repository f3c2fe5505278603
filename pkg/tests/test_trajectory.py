import numpy as np
import pytest

from gesturedet.geometry import ConfigurationError
from gesturedet.labels import GestureClass, Hand
from gesturedet.trajectory import (DEFAULT_SESSION_SIZES, SessionPlan,
                                   TrajectoryConfig, coverage, load_plan,
                                   path_length, plan_session, plan_from_dict,
                                   plan_to_dict, save_plan, target_at)


def test_start_position_top_left():
    tr = TrajectoryConfig(box_w=0.3, box_h=0.25, duration_s=10)
    b = target_at(tr, 0.0)
    assert b.cx == pytest.approx(0.15)
    assert b.cy == pytest.approx(0.125)


def test_end_position_parity():
    odd = TrajectoryConfig(box_w=0.2, box_h=0.2, n_rows=3, duration_s=10)
    b = target_at(odd, 10.0)
    assert b.cx == pytest.approx(1 - 0.1)   # bottom-right
    assert b.cy == pytest.approx(1 - 0.1)
    even = TrajectoryConfig(box_w=0.2, box_h=0.2, n_rows=4, duration_s=10)
    b = target_at(even, 10.0)
    assert b.cx == pytest.approx(0.1)       # bottom-left
    assert b.cy == pytest.approx(1 - 0.1)


def test_single_row_midpoint():
    tr = TrajectoryConfig(box_w=0.2, box_h=0.2, n_rows=1, duration_s=8)
    b = target_at(tr, 4.0)
    assert b.cx == pytest.approx(0.5)
    assert b.cy == pytest.approx(0.1)


def test_out_of_range_time():
    tr = TrajectoryConfig(box_w=0.2, box_h=0.2, duration_s=5)
    with pytest.raises(ValueError):
        target_at(tr, -0.1)
    with pytest.raises(ValueError):
        target_at(tr, 5.1)


def test_full_frame_box_is_static():
    tr = TrajectoryConfig(box_w=1.0, box_h=1.0, duration_s=5)
    for t in (0, 2.5, 5):
        b = target_at(tr, t)
        assert (b.cx, b.cy) == (0.5, 0.5)


def test_containment_and_constant_size():
    tr = TrajectoryConfig(box_w=0.35, box_h=0.3, duration_s=12)
    for t in np.linspace(0, 12, 200):
        b = target_at(tr, float(t))
        assert b.contained()
        assert (b.w, b.h) == (0.35, 0.3)


def test_lipschitz_speed():
    tr = TrajectoryConfig(box_w=0.25, box_h=0.25, duration_s=10)
    v = path_length(tr) / tr.duration_s
    rng = np.random.default_rng(0)
    for _ in range(200):
        t1, t2 = rng.uniform(0, 10, 2)
        b1, b2 = target_at(tr, t1), target_at(tr, t2)
        dist = np.hypot(b1.cx - b2.cx, b1.cy - b2.cy)
        assert dist <= v * abs(t1 - t2) + 1e-9


def test_continuity_across_row_transitions():
    tr = TrajectoryConfig(box_w=0.3, box_h=0.3, n_rows=4, duration_s=10)
    ts = np.linspace(0, 10, 2001)
    pts = np.array([(b.cx, b.cy) for b in (target_at(tr, float(t)) for t in ts)])
    step = np.hypot(*np.diff(pts, axis=0).T).max()
    v = path_length(tr) / tr.duration_s
    assert step <= v * (ts[1] - ts[0]) + 1e-9


def test_coverage_full_frame_box():
    tr = TrajectoryConfig(box_w=1.0, box_h=1.0, duration_s=5)
    assert coverage(tr, n_samples=2) == 1.0


def test_coverage_single_row_band():
    tr = TrajectoryConfig(box_w=0.2, box_h=0.2, n_rows=1, duration_s=5)
    assert coverage(tr, n_samples=512) <= 0.2 + 1e-2


def test_coverage_monotone_in_rows():
    prev = 0.0
    for rows in (1, 2, 3, 5):
        tr = TrajectoryConfig(box_w=0.2, box_h=0.2, n_rows=rows, duration_s=5)
        c = coverage(tr, n_samples=1024)
        assert c >= prev - 1e-9
        prev = c


def test_default_rows_give_full_coverage():
    for (w, h) in DEFAULT_SESSION_SIZES:
        tr = TrajectoryConfig(box_w=w, box_h=h, duration_s=5)
        assert coverage(tr, n_samples=2048) >= 0.99


def test_coverage_validates_inputs():
    tr = TrajectoryConfig(box_w=0.5, box_h=0.5)
    with pytest.raises(ValueError):
        coverage(tr, n_samples=1)
    with pytest.raises(ValueError):
        coverage(tr, n_samples=16, grid=64)


def test_plan_session_protocol_shape():
    plan = plan_session("s01", "scene01")
    assert len(plan.sequences) == 24
    assert [s.sequence_index for s in plan.sequences] == list(range(24))
    # gesture-major ordering, 3 distinct sizes per (gesture, hand)
    for i, seq in enumerate(plan.sequences):
        assert seq.gesture == list(GestureClass)[i // 6]
        assert seq.hand == list(Hand)[(i // 3) % 2]
    for g in GestureClass:
        for h in Hand:
            sizes = {(s.trajectory.box_w, s.trajectory.box_h)
                     for s in plan.sequences if s.gesture == g and s.hand == h}
            assert len(sizes) == 3


def test_plan_session_small():
    plan = plan_session("s", "sc", gestures=[GestureClass.PEACE], hands=[Hand.LEFT],
                        sizes=((0.2, 0.2), (0.3, 0.3), (0.4, 0.4)))
    assert len(plan.sequences) == 3
    assert len({(s.trajectory.box_w, s.trajectory.box_h) for s in plan.sequences}) == 3


def test_plan_session_rejects_duplicate_sizes():
    with pytest.raises(ConfigurationError):
        plan_session("s", "sc", sizes=((0.2, 0.2), (0.2, 0.2), (0.4, 0.4)))


def test_plan_session_deterministic():
    assert plan_session("s01", "sc02") == plan_session("s01", "sc02")


def test_plan_roundtrip(tmp_path):
    plan = plan_session("subj", "scene")
    assert plan_from_dict(plan_to_dict(plan)) == plan
    p = tmp_path / "plan.json"
    save_plan(plan, p)
    assert load_plan(p) == plan


def test_trajectory_config_validation():
    with pytest.raises(ConfigurationError):
        TrajectoryConfig(box_w=1.2, box_h=0.5)
    with pytest.raises(ConfigurationError):
        TrajectoryConfig(box_w=0.5, box_h=0.5, duration_s=0)
    with pytest.raises(ConfigurationError):
        TrajectoryConfig(box_w=0.6, box_h=0.6, margin=0.3)
    assert TrajectoryConfig(box_w=0.5, box_h=0.3).n_rows == 4

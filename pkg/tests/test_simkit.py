import math

import numpy as np
import pytest

from doortrack.errors import InvalidInputError
from doortrack.simkit import (
    BodyShadowModel,
    Pose,
    SimConfig,
    ToaFrame,
    read_toa_csv,
    shadow_delay,
    simulate_session,
    simulate_toa,
    waypoint_trajectory,
    write_toa_csv,
)
from doortrack.world import Anchor, Point, Scenario, Wall

C = 299_792_458.0


def open_scenario(anchors=None, walls=()):
    anchors = anchors or (
        Anchor(1, Point(10.0, 0.0)),
        Anchor(2, Point(0.0, 10.0)),
        Anchor(3, Point(-10.0, 0.0)),
        Anchor(4, Point(0.0, -10.0)),
    )
    return Scenario(walls=tuple(walls), anchors=tuple(anchors))


def quiet_config(**kw):
    defaults = dict(
        wall_delay=0.0,
        shadow=BodyShadowModel(delay_partial=0.0, delay_full=0.0),
        toa_noise_sigma=0.0,
        clock_offset=0.0,
        rng_seed=0,
    )
    defaults.update(kw)
    return SimConfig(**defaults)


class TestWaypointTrajectory:
    def test_straight_line_counts_and_heading(self):
        poses = waypoint_trajectory([(0, 0), (10, 0)], speed=1.0, dt=1.0)
        assert len(poses) == 11
        assert [p.position.x for p in poses] == pytest.approx(list(range(11)))
        assert all(p.heading == 0.0 for p in poses)

    def test_endpoint_always_included(self):
        poses = waypoint_trajectory([(0, 0), (1, 0)], speed=1.0, dt=0.4)
        s = [p.position.x for p in poses]
        assert s == pytest.approx([0.0, 0.4, 0.8, 1.0])

    def test_heading_changes_at_turn(self):
        poses = waypoint_trajectory([(0, 0), (2, 0), (2, 2)], speed=1.0, dt=0.5)
        at_corner = [p for p in poses if p.position == Point(2.0, 0.0)]
        assert len(at_corner) == 1
        assert at_corner[0].heading == pytest.approx(math.pi / 2)
        before = [p for p in poses if p.position.x < 2.0 and p.position.y == 0.0]
        assert all(p.heading == 0.0 for p in before)

    def test_timestamps_follow_speed(self):
        poses = waypoint_trajectory([(0, 0), (4, 0)], speed=2.0, dt=0.5)
        assert [p.t for p in poses] == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])

    def test_duplicate_waypoints_rejected(self):
        with pytest.raises(InvalidInputError):
            waypoint_trajectory([(0, 0), (0, 0), (1, 0)], speed=1.0, dt=0.1)

    def test_bad_speed_dt_rejected(self):
        with pytest.raises(InvalidInputError):
            waypoint_trajectory([(0, 0), (1, 0)], speed=0.0, dt=0.1)
        with pytest.raises(InvalidInputError):
            waypoint_trajectory([(0, 0), (1, 0)], speed=1.0, dt=0.0)

    def test_three_hour_walk_sample_count(self):
        # 10800 s of walking sampled at 0.1 s: one pose per interval start
        # plus the always-included endpoint.
        poses = waypoint_trajectory([(0, 0), (10800.0, 0)], speed=1.0, dt=0.1)
        assert len(poses) == 108_001


class TestShadowDelay:
    def test_ahead_is_clear(self):
        assert shadow_delay(BodyShadowModel(), 0.0) == 0.0

    def test_behind_is_full(self):
        assert shadow_delay(BodyShadowModel(), math.pi) == 1.5

    def test_ramp_midpoint(self):
        m = BodyShadowModel()
        theta = (m.theta_clear + m.theta_full) / 2
        assert shadow_delay(m, theta) == pytest.approx(0.175)

    def test_monotone_nondecreasing(self):
        m = BodyShadowModel()
        thetas = np.linspace(0.0, math.pi, 400)
        vals = [shadow_delay(m, t) for t in thetas]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_jump_at_theta_full(self):
        m = BodyShadowModel()
        eps = 1e-9
        assert shadow_delay(m, m.theta_full) == pytest.approx(m.delay_partial)
        assert shadow_delay(m, m.theta_full + eps) == m.delay_full

    def test_domain_enforced(self):
        with pytest.raises(InvalidInputError):
            shadow_delay(BodyShadowModel(), -0.1)
        with pytest.raises(InvalidInputError):
            shadow_delay(BodyShadowModel(), math.pi + 0.1)

    def test_model_validation(self):
        with pytest.raises(InvalidInputError):
            BodyShadowModel(theta_clear=2.0, theta_full=1.0)
        with pytest.raises(InvalidInputError):
            BodyShadowModel(delay_partial=2.0, delay_full=1.0)


class TestSimulateToa:
    def test_pure_geometry(self):
        s = open_scenario()
        pose = Pose(0.0, Point(7.0, 0.0), 0.0)  # 3 m from anchor 1, facing it
        frame = simulate_toa(s, quiet_config(), pose)
        assert frame.toas[1] == pytest.approx(3.0 / C, rel=1e-12)
        assert frame.toas[1] * 1e9 == pytest.approx(10.0069, abs=1e-3)

    def test_two_walls_add_delay(self):
        walls = [
            Wall(Point(8.0, -1.0), Point(8.0, 1.0)),
            Wall(Point(9.0, -1.0), Point(9.0, 1.0)),
        ]
        s_open = open_scenario()
        s_walls = open_scenario(walls=walls)
        pose = Pose(0.0, Point(7.0, 0.0), 0.0)
        cfg = quiet_config(wall_delay=0.3)
        base = simulate_toa(s_open, cfg, pose).toas[1]
        walled = simulate_toa(s_walls, cfg, pose).toas[1]
        assert (walled - base) * 1e9 == pytest.approx(0.6, rel=1e-9)

    def test_shadow_applies_to_anchor_behind(self):
        s = open_scenario()
        cfg = quiet_config(shadow=BodyShadowModel())
        pose = Pose(0.0, Point(7.0, 0.0), 0.0)  # facing +x: anchor 3 is behind
        frame = simulate_toa(s, cfg, pose)
        assert frame.toas[1] == pytest.approx(3.0 / C, rel=1e-12)
        assert (frame.toas[3] - 17.0 / C) * 1e9 == pytest.approx(1.5, rel=1e-9)

    def test_determinism(self):
        s = open_scenario()
        cfg = SimConfig(rng_seed=42)
        pose = Pose(0.0, Point(1.0, 2.0), 0.3)
        f1 = simulate_toa(s, cfg, pose, stream=5)
        f2 = simulate_toa(s, cfg, pose, stream=5)
        assert f1 == f2

    def test_outside_bounding_box_rejected(self):
        s = open_scenario()
        with pytest.raises(InvalidInputError):
            simulate_toa(s, quiet_config(), Pose(0.0, Point(100.0, 0.0), 0.0))


class TestSimulateSession:
    def test_static_noiseless_frames_identical(self):
        s = open_scenario()
        pose = Pose(0.0, Point(1.0, 1.0), 0.0)
        frames = simulate_session(s, quiet_config(), [pose] * 10)
        assert len(frames) == 10
        assert all(f == frames[0] for f in frames)

    def test_one_frame_per_pose(self):
        s = open_scenario()
        traj = waypoint_trajectory([(0, 0), (5, 0)], speed=1.0, dt=0.5)
        frames = simulate_session(s, SimConfig(rng_seed=1), traj)
        assert len(frames) == len(traj)
        assert [f.t for f in frames] == [p.t for p in traj]

    def test_session_determinism(self):
        s = open_scenario()
        traj = waypoint_trajectory([(0, 0), (5, 0)], speed=1.0, dt=0.5)
        a = simulate_session(s, SimConfig(rng_seed=9), traj)
        b = simulate_session(s, SimConfig(rng_seed=9), traj)
        assert a == b

    def test_empty_trajectory_rejected(self):
        with pytest.raises(InvalidInputError):
            simulate_session(open_scenario(), quiet_config(), [])


class TestToaCsv:
    def test_round_trip_exact(self, tmp_path):
        s = open_scenario()
        traj = waypoint_trajectory([(0, 0), (3, 2)], speed=1.3, dt=0.7)
        frames = simulate_session(s, SimConfig(rng_seed=3), traj)
        path = tmp_path / "toa.csv"
        write_toa_csv(frames, path)
        loaded = read_toa_csv(path)
        assert loaded == frames

    def test_missing_rows_drop_anchors(self, tmp_path):
        path = tmp_path / "toa.csv"
        path.write_text("t,anchor_id,toa_s\n0.0,1,1e-08\n0.0,2,1.1e-08\n0.5,1,9e-09\n")
        frames = read_toa_csv(path)
        assert len(frames) == 2
        assert set(frames[0].toas) == {1, 2}
        assert set(frames[1].toas) == {1}

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "toa.csv"
        path.write_text("time,anchor,toa\n")
        with pytest.raises(InvalidInputError):
            read_toa_csv(path)

    def test_non_finite_toa_rejected(self):
        with pytest.raises(InvalidInputError):
            ToaFrame(0.0, {1: float("nan")})

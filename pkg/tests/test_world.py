import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doortrack.errors import InvalidInputError, ScenarioFormatError
from doortrack.world import (
    Anchor,
    Door,
    Point,
    Scenario,
    Wall,
    Zone,
    count_wall_crossings,
    decompose_against_door,
    door_reference_points,
    load_scenario,
    scenario_to_toml,
    write_scenario,
    zone_of,
)


def marching_crossings(walls, a, b, step=0.001):
    """Independent 1 mm ray-marching oracle: per wall, count a crossing when
    the side-of-wall sign flips between samples and the interpolated crossing
    point projects onto the wall segment."""
    ax, ay = a
    bx, by = b
    length = math.hypot(bx - ax, by - ay)
    n = max(2, int(math.ceil(length / step)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    px = ax + ts * (bx - ax)
    py = ay + ts * (by - ay)
    count = 0
    for w in walls:
        wax, way = w.a
        wbx, wby = w.b
        f = (wbx - wax) * (py - way) - (wby - way) * (px - wax)
        hit = False
        for i in np.nonzero(f[:-1] * f[1:] < 0)[0]:
            tt = f[i] / (f[i] - f[i + 1])
            cx = px[i] + tt * (px[i + 1] - px[i])
            cy = py[i] + tt * (py[i + 1] - py[i])
            wlen2 = (wbx - wax) ** 2 + (wby - way) ** 2
            u = ((cx - wax) * (wbx - wax) + (cy - way) * (wby - way)) / wlen2
            if 0.0 <= u <= 1.0:
                hit = True
                break
        if hit:
            count += 1
    return count


def anchors3():
    return (
        Anchor(1, Point(0.0, 0.0)),
        Anchor(2, Point(5.0, 0.0)),
        Anchor(3, Point(0.0, 5.0)),
    )


def wall_scenario(walls):
    return Scenario(walls=tuple(walls), anchors=anchors3())


class TestWallCrossings:
    def test_two_walls_crossed(self):
        walls = [
            Wall(Point(1.0, -1.0), Point(1.0, 1.0)),
            Wall(Point(3.0, -1.0), Point(3.0, 1.0)),
        ]
        s = wall_scenario(walls)
        assert count_wall_crossings(s, Point(0, 0), Point(4, 0)) == 2

    def test_empty_room(self):
        s = wall_scenario([])
        assert count_wall_crossings(s, Point(0, 0), Point(4, 0)) == 0

    def test_collinear_overlap_counts_once(self):
        s = wall_scenario([Wall(Point(1.0, 0.0), Point(3.0, 0.0))])
        assert count_wall_crossings(s, Point(0, 0), Point(4, 0)) == 1

    def test_endpoint_on_wall_counts(self):
        s = wall_scenario([Wall(Point(2.0, -1.0), Point(2.0, 1.0))])
        assert count_wall_crossings(s, Point(2.0, 0.0), Point(4.0, 0.0)) == 1

    def test_degenerate_segment_rejected(self):
        s = wall_scenario([])
        with pytest.raises(InvalidInputError):
            count_wall_crossings(s, Point(1, 1), Point(1, 1))

    def test_non_attenuating_walls_ignored(self):
        s = wall_scenario([Wall(Point(1.0, -1.0), Point(1.0, 1.0), attenuating=False)])
        assert count_wall_crossings(s, Point(0, 0), Point(4, 0)) == 0

    def test_symmetry_random(self):
        rng = np.random.default_rng(7)
        walls = [
            Wall(Point(*rng.uniform(-5, 5, 2)), Point(*rng.uniform(-5, 5, 2)))
            for _ in range(8)
        ]
        s = wall_scenario(walls)
        for _ in range(200):
            a = Point(*rng.uniform(-5, 5, 2))
            b = Point(*rng.uniform(-5, 5, 2))
            assert count_wall_crossings(s, a, b) == count_wall_crossings(s, b, a)

    def test_matches_marching_oracle_random(self):
        rng = np.random.default_rng(11)
        for trial in range(40):
            walls = [
                Wall(Point(*rng.uniform(-4, 4, 2)), Point(*rng.uniform(-4, 4, 2)))
                for _ in range(rng.integers(1, 7))
            ]
            s = wall_scenario(walls)
            for _ in range(10):
                a = Point(*rng.uniform(-4, 4, 2))
                b = Point(*rng.uniform(-4, 4, 2))
                assert count_wall_crossings(s, a, b) == marching_crossings(walls, a, b)


class TestZones:
    def make_scenario(self):
        z1 = Zone(1, (Point(0, 0), Point(4, 0), Point(4, 3), Point(0, 3)))
        z2 = Zone(2, (Point(4, 0), Point(8, 0), Point(8, 3), Point(4, 3)))
        z3 = Zone(3, (Point(0, 3), Point(8, 3), Point(8, 6), Point(0, 6)))
        return Scenario(zones=(z1, z2, z3), anchors=anchors3())

    def test_centroid_inside(self):
        s = self.make_scenario()
        assert zone_of(s, Point(2.0, 1.5)) == 1

    def test_outside_all(self):
        s = self.make_scenario()
        assert zone_of(s, Point(20.0, 20.0)) is None

    def test_shared_edge_lowest_id(self):
        s = self.make_scenario()
        assert zone_of(s, Point(4.0, 1.5)) == 1  # edge shared by zones 1 and 2
        assert zone_of(s, Point(6.0, 3.0)) == 2  # edge shared by zones 2 and 3

    def test_vertex_average_samples_contained(self):
        s = self.make_scenario()
        for z in s.zones:
            cx = sum(p.x for p in z.polygon) / len(z.polygon)
            cy = sum(p.y for p in z.polygon) / len(z.polygon)
            assert zone_of(s, Point(cx, cy)) == z.id

    def test_overlapping_zones_rejected(self):
        z1 = Zone(1, (Point(0, 0), Point(4, 0), Point(4, 3), Point(0, 3)))
        z2 = Zone(2, (Point(2, 1), Point(6, 1), Point(6, 4), Point(2, 4)))
        with pytest.raises(InvalidInputError):
            Scenario(zones=(z1, z2), anchors=anchors3())


class TestDoor:
    def door(self, width=0.8, axis=(1.0, 0.0)):
        return Door(1, Point(2.0, 3.0), Point(*axis), width)

    def test_normal_is_axis_rotated(self):
        d = self.door(axis=(1.0, 0.0))
        assert d.normal == Point(0.0, 1.0)
        d = self.door(axis=(0.0, 1.0))
        assert d.normal == Point(-1.0, 0.0)

    def test_axis_normalized(self):
        d = Door(1, Point(0, 0), Point(2.0, 0.0), 0.8)
        assert math.isclose(d.axis.norm(), 1.0, abs_tol=1e-12)

    def test_reference_points_single(self):
        d = self.door()
        assert door_reference_points(d, 1) == [d.center]

    def test_reference_points_two(self):
        d = self.door(width=0.8)
        pts = door_reference_points(d, 2)
        assert pts[0] == pytest.approx((1.8, 3.0))
        assert pts[1] == pytest.approx((2.2, 3.0))

    def test_reference_points_mean_is_center(self):
        d = self.door(width=0.77, axis=(0.6, 0.8))
        pts = door_reference_points(d, 5)
        mx = sum(p.x for p in pts) / 5
        my = sum(p.y for p in pts) / 5
        assert abs(mx - d.center.x) < 1e-12
        assert abs(my - d.center.y) < 1e-12

    def test_reference_points_flip_invariant_as_set(self):
        d = self.door(width=0.8, axis=(0.6, 0.8))
        d_flipped = Door(1, d.center, Point(-d.axis.x, -d.axis.y), d.width)
        a = sorted(tuple(p) for p in door_reference_points(d, 4))
        b = sorted(tuple(p) for p in door_reference_points(d_flipped, 4))
        assert np.allclose(a, b, atol=1e-12)

    def test_reference_points_zero_count_rejected(self):
        with pytest.raises(InvalidInputError):
            door_reference_points(self.door(), 0)

    def test_decompose_at_reference(self):
        d = self.door()
        assert decompose_against_door(d, d.center, d.center) == (0.0, 0.0)

    def test_decompose_normal_offset(self):
        d = self.door()
        p = Point(d.center.x + 0.2 * d.normal.x, d.center.y + 0.2 * d.normal.y)
        h, v = decompose_against_door(d, p, d.center)
        assert h == pytest.approx(0.0, abs=1e-12)
        assert v == pytest.approx(0.2, abs=1e-12)

    def test_decompose_mixed_offset(self):
        d = self.door()
        p = Point(
            d.center.x + 0.1 * d.axis.x + 0.3 * d.normal.x,
            d.center.y + 0.1 * d.axis.y + 0.3 * d.normal.y,
        )
        h, v = decompose_against_door(d, p, d.center)
        assert h == pytest.approx(0.1, abs=1e-12)
        assert v == pytest.approx(0.3, abs=1e-12)

    @given(
        st.floats(-3, 3),
        st.floats(-3, 3),
        st.floats(0, 2 * math.pi),
    )
    @settings(max_examples=80, deadline=None)
    def test_decompose_pythagoras(self, dx, dy, ang):
        d = Door(1, Point(1.0, 1.0), Point(math.cos(ang), math.sin(ang)), 0.8)
        p = Point(d.center.x + dx, d.center.y + dy)
        h, v = decompose_against_door(d, p, d.center)
        r2 = dx * dx + dy * dy
        assert h * h + v * v == pytest.approx(r2, rel=1e-9, abs=1e-12)

    def test_width_band_enforced(self):
        with pytest.raises(InvalidInputError):
            self.door(width=0.2)
        with pytest.raises(InvalidInputError):
            self.door(width=1.5)


class TestScenarioFile:
    def build(self):
        return Scenario(
            walls=(Wall(Point(0, 0), Point(8, 0)), Wall(Point(0, 3), Point(3, 3), False)),
            doors=(Door(1, Point(4.0, 0.0), Point(1.0, 0.0), 0.8),),
            zones=(
                Zone(1, (Point(0, 0), Point(8, 0), Point(8, 3), Point(0, 3))),
                Zone(2, (Point(0, -3), Point(8, -3), Point(8, 0), Point(0, 0))),
            ),
            anchors=(
                Anchor(1, Point(0.1, 0.1)),
                Anchor(2, Point(7.9, 0.1)),
                Anchor(3, Point(4.0, 2.9)),
            ),
            speed_of_light=3e8,
        )

    def test_round_trip(self, tmp_path):
        s = self.build()
        path = tmp_path / "scn.toml"
        write_scenario(s, path)
        loaded = load_scenario(path)
        assert loaded == s

    def test_format_field_required(self, tmp_path):
        path = tmp_path / "scn.toml"
        txt = scenario_to_toml(self.build()).replace("format = 1", "format = 99")
        path.write_text(txt)
        with pytest.raises(ScenarioFormatError):
            load_scenario(path)

    def test_malformed_toml_reports_error(self, tmp_path):
        path = tmp_path / "scn.toml"
        path.write_text("format = 1\n[[anchors]\nid = 1\n")
        with pytest.raises(ScenarioFormatError):
            load_scenario(path)

    def test_min_anchor_count(self):
        with pytest.raises(InvalidInputError):
            Scenario(anchors=(Anchor(1, Point(0, 0)),))

    def test_duplicate_anchor_ids(self):
        with pytest.raises(InvalidInputError):
            Scenario(
                anchors=(
                    Anchor(1, Point(0, 0)),
                    Anchor(1, Point(1, 0)),
                    Anchor(3, Point(0, 1)),
                )
            )

    def test_door_off_zone_boundary_rejected(self):
        with pytest.raises(InvalidInputError):
            Scenario(
                doors=(Door(1, Point(4.0, 1.5), Point(1.0, 0.0), 0.8),),
                zones=(Zone(1, (Point(0, 0), Point(8, 0), Point(8, 3), Point(0, 3))),),
                anchors=anchors3(),
            )

    def test_bounding_box(self):
        s = self.build()
        xmin, ymin, xmax, ymax = s.bounding_box()
        assert (xmin, ymin) == (0.0, -3.0)
        assert (xmax, ymax) == (8.0, 3.0)

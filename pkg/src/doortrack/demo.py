"""Bundled demo world: a 48 m^2 four-room apartment with six anchors.

Rooms are 4x3 m, separated by a vertical and a horizontal interior wall,
each wall broken by two 0.8 m doorways. Furniture (bed, wardrobe, couch,
desk) contributes extra attenuating segments, and anchors sit near the
perimeter. Used by the end-to-end tests and the README walkthrough.
"""

from __future__ import annotations

from .simkit import BodyShadowModel, SimConfig
from .world import Anchor, Door, Point, Scenario, Wall, Zone

# doorway openings (center +- 0.4 m) in the interior walls
_DOOR_SPECS = (
    # id, center, axis
    (1, (2.0, 3.0), (1.0, 0.0)),  # between rooms 1 (below) and 3 (above)
    (2, (6.0, 3.0), (1.0, 0.0)),  # between rooms 2 (below) and 4 (above)
    (3, (4.0, 1.5), (0.0, 1.0)),  # between rooms 1 (left) and 2 (right)
    (4, (4.0, 4.5), (0.0, 1.0)),  # between rooms 3 (left) and 4 (right)
)
DOOR_WIDTH = 0.8

_FURNITURE = (
    # room 1: bed in the south-west corner
    ((0.2, 0.8), (1.0, 0.8)),
    ((1.0, 0.8), (1.0, 0.2)),
    # room 2: kitchen counter along the south wall, wardrobe at the east wall
    ((4.6, 0.35), (6.2, 0.35)),
    ((7.4, 0.4), (7.4, 1.2)),
    # room 3: couch at the west wall, cabinet at the north wall
    ((0.35, 3.4), (0.35, 4.6)),
    ((2.8, 5.8), (2.8, 5.45)),
    # room 4: shelf and table near the north wall, desk at the east wall
    ((4.7, 5.75), (5.4, 5.75)),
    ((5.2, 5.05), (5.9, 5.05)),
    ((7.65, 3.3), (7.65, 4.0)),
)


def demo_scenario() -> Scenario:
    walls = [
        # perimeter
        Wall(Point(0.0, 0.0), Point(8.0, 0.0)),
        Wall(Point(8.0, 0.0), Point(8.0, 6.0)),
        Wall(Point(8.0, 6.0), Point(0.0, 6.0)),
        Wall(Point(0.0, 6.0), Point(0.0, 0.0)),
        # horizontal interior wall at y=3, broken at doors 1 and 2
        Wall(Point(0.0, 3.0), Point(1.6, 3.0)),
        Wall(Point(2.4, 3.0), Point(5.6, 3.0)),
        Wall(Point(6.4, 3.0), Point(8.0, 3.0)),
        # vertical interior wall at x=4, broken at doors 3 and 4
        Wall(Point(4.0, 0.0), Point(4.0, 1.1)),
        Wall(Point(4.0, 1.9), Point(4.0, 4.1)),
        Wall(Point(4.0, 4.9), Point(4.0, 6.0)),
    ]
    walls += [Wall(Point(*a), Point(*b)) for a, b in _FURNITURE]
    doors = tuple(
        Door(did, Point(*c), Point(*ax), DOOR_WIDTH) for did, c, ax in _DOOR_SPECS
    )
    zones = (
        Zone(1, (Point(0, 0), Point(4, 0), Point(4, 3), Point(0, 3))),
        Zone(2, (Point(4, 0), Point(8, 0), Point(8, 3), Point(4, 3))),
        Zone(3, (Point(0, 3), Point(4, 3), Point(4, 6), Point(0, 6))),
        Zone(4, (Point(4, 3), Point(8, 3), Point(8, 6), Point(4, 6))),
    )
    anchors = (
        Anchor(1, Point(0.3, 0.3)),
        Anchor(2, Point(7.7, 0.3)),
        Anchor(3, Point(7.7, 5.7)),
        Anchor(4, Point(0.3, 5.7)),
        Anchor(5, Point(4.1, 0.3)),
        Anchor(6, Point(3.9, 5.7)),
    )
    return Scenario(walls=tuple(walls), doors=doors, zones=zones, anchors=anchors)


def calibration_waypoints() -> list[tuple[float, float]]:
    """One lap through all four rooms with a detour per room; ping-pong
    repetition covers both transition directions of every door. The corner
    detours keep turn-arounds far enough from the doors that the two
    crossing directions stay separate windows."""
    return [
        (1.2, 1.2),
        (2.0, 1.5),
        (6.0, 1.5),  # door 3 eastward into room 2
        (7.3, 0.8),
        (6.0, 0.8),
        (6.0, 4.5),  # door 2 northward into room 4
        (7.3, 5.3),
        (4.8, 4.2),
        (4.8, 4.5),
        (2.0, 4.5),  # door 4 westward into room 3
        (1.0, 5.2),
        (2.0, 3.8),
        (2.0, 1.5),  # door 1 southward into room 1
        (1.2, 1.2),
    ]


def test_waypoints() -> list[tuple[float, float]]:
    """Held-out route, different from the calibration lap, through every room."""
    return [
        (1.0, 1.0),
        (1.0, 2.2),
        (2.6, 2.2),
        (2.6, 1.5),
        (5.2, 1.5),  # door 3
        (5.2, 0.9),
        (7.0, 0.9),
        (7.0, 2.3),
        (6.0, 2.3),
        (6.0, 4.2),  # door 2
        (7.2, 4.2),
        (7.2, 5.3),
        (6.4, 5.3),
        (6.4, 3.6),
        (4.6, 3.6),
        (4.6, 4.5),
        (3.0, 4.5),  # door 4
        (3.0, 5.3),
        (1.0, 5.3),
        (1.0, 3.6),
        (2.0, 3.6),
        (2.0, 1.8),  # door 1
        (3.4, 1.8),
        (3.4, 0.8),
        (1.0, 1.0),
    ]


def demo_sim_config(seed: int) -> SimConfig:
    """Measurement model used by the bundled walkthrough.

    Body shadowing is stronger than the library defaults (0.5 ns while
    partially covered, 2.0 ns when wholly covered) and ranging noise is
    0.2 ns: a chest-worn tag in a furnished flat, harsh enough that a
    fully-shadowed path fails the tracker's innovation gate.
    """
    return SimConfig(
        shadow=BodyShadowModel(delay_partial=0.5, delay_full=2.0),
        toa_noise_sigma=0.2,
        rng_seed=seed,
    )


def ping_pong(waypoints: list[tuple[float, float]], laps: int) -> list[tuple[float, float]]:
    """Walk the route forward then backward, ``laps`` traversals total."""
    if laps < 1:
        raise ValueError("laps must be >= 1")
    out = list(waypoints)
    forward = False
    for _ in range(laps - 1):
        nxt = waypoints[:-1][::-1] if not forward else waypoints[1:]
        out.extend(nxt)
        forward = not forward
    return out

"""Static world model: walls, doors, zones, anchors, and the geometric
predicates the rest of the toolkit is built on.

All types are immutable; every operation here is pure.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import InvalidInputError, ScenarioFormatError

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

SPEED_OF_LIGHT = 299_792_458.0

DOOR_WIDTH_MIN = 0.4
DOOR_WIDTH_MAX = 1.2

_UNIT_TOL = 1e-9
_DOOR_ON_BOUNDARY_TOL = 0.1


class Point(NamedTuple):
    x: float
    y: float

    def __add__(self, other):
        return Point(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Point(self.x - other[0], self.y - other[1])

    def scaled(self, k: float) -> "Point":
        return Point(self.x * k, self.y * k)

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def _require_finite(p, what: str) -> None:
    if not (math.isfinite(p[0]) and math.isfinite(p[1])):
        raise InvalidInputError(f"{what} has non-finite coordinates: {p!r}")


@dataclass(frozen=True)
class Wall:
    """A straight wall segment; ``attenuating`` walls delay signals crossing them."""

    a: Point
    b: Point
    attenuating: bool = True

    def __post_init__(self):
        _require_finite(self.a, "wall endpoint")
        _require_finite(self.b, "wall endpoint")
        if self.a == self.b:
            raise InvalidInputError(f"wall has zero length at {self.a!r}")


@dataclass(frozen=True)
class Door:
    """A doorway opening.

    ``axis`` points along the opening and is normalized on construction;
    ``normal`` is the axis rotated +90 degrees and is always derived.
    """

    id: int
    center: Point
    axis: Point
    width: float
    normal: Point = field(init=False)

    def __post_init__(self):
        _require_finite(self.center, "door center")
        _require_finite(self.axis, "door axis")
        n = math.hypot(self.axis[0], self.axis[1])
        if not 0.5 <= n <= 2.0:
            raise InvalidInputError(f"door {self.id}: axis {self.axis!r} is degenerate")
        axis = Point(self.axis[0] / n, self.axis[1] / n)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "normal", Point(-axis.y, axis.x))
        if not DOOR_WIDTH_MIN <= self.width <= DOOR_WIDTH_MAX:
            raise InvalidInputError(
                f"door {self.id}: width {self.width} outside "
                f"[{DOOR_WIDTH_MIN}, {DOOR_WIDTH_MAX}] m"
            )

    def endpoints(self, margin: float = 0.0) -> tuple[Point, Point]:
        """Opening segment endpoints, optionally widened by ``margin`` per side."""
        h = self.width / 2.0 + margin
        return (
            Point(self.center.x - h * self.axis.x, self.center.y - h * self.axis.y),
            Point(self.center.x + h * self.axis.x, self.center.y + h * self.axis.y),
        )


@dataclass(frozen=True)
class Zone:
    """A simple polygonal region of the deployment area."""

    id: int
    polygon: tuple[Point, ...]

    def __post_init__(self):
        poly = tuple(Point(float(p[0]), float(p[1])) for p in self.polygon)
        object.__setattr__(self, "polygon", poly)
        if len(poly) < 3:
            raise InvalidInputError(f"zone {self.id}: polygon needs >= 3 vertices")
        for p in poly:
            _require_finite(p, f"zone {self.id} vertex")
        if not _polygon_is_simple(poly):
            raise InvalidInputError(f"zone {self.id}: polygon self-intersects")


@dataclass(frozen=True)
class Anchor:
    id: int
    position: Point

    def __post_init__(self):
        _require_finite(self.position, f"anchor {self.id} position")


@dataclass(frozen=True)
class Scenario:
    """Immutable world description consumed by simulation, calibration and tracking."""

    walls: tuple[Wall, ...] = ()
    doors: tuple[Door, ...] = ()
    zones: tuple[Zone, ...] = ()
    anchors: tuple[Anchor, ...] = ()
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "doors", tuple(self.doors))
        object.__setattr__(self, "zones", tuple(self.zones))
        object.__setattr__(self, "anchors", tuple(self.anchors))
        if len(self.anchors) < 3:
            raise InvalidInputError("a scenario needs at least 3 anchors")
        for name, ids in (
            ("anchor", [a.id for a in self.anchors]),
            ("door", [d.id for d in self.doors]),
            ("zone", [z.id for z in self.zones]),
        ):
            if len(ids) != len(set(ids)):
                raise InvalidInputError(f"duplicate {name} ids: {sorted(ids)}")
        _check_zones_disjoint(self.zones)
        for door in self.doors:
            if self.zones and _distance_to_any_zone_boundary(door.center, self.zones) > _DOOR_ON_BOUNDARY_TOL:
                raise InvalidInputError(
                    f"door {door.id} center {tuple(door.center)} is not on a zone boundary"
                )

    def anchor_by_id(self, anchor_id: int) -> Anchor:
        for a in self.anchors:
            if a.id == anchor_id:
                return a
        raise InvalidInputError(f"unknown anchor id {anchor_id}")

    def door_by_id(self, door_id: int) -> Door:
        for d in self.doors:
            if d.id == door_id:
                return d
        raise InvalidInputError(f"unknown door id {door_id}")

    def anchor_ids(self) -> list[int]:
        return [a.id for a in self.anchors]

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over anchors, walls, zones and doors."""
        pts: list[Point] = [a.position for a in self.anchors]
        for w in self.walls:
            pts += [w.a, w.b]
        for z in self.zones:
            pts += list(z.polygon)
        for d in self.doors:
            pts += list(d.endpoints())
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        return min(xs), min(ys), max(xs), max(ys)


# --------------------------------------------------------------------------
# low-level geometry


def _orient(a, b, c) -> float:
    """Cross product (b-a) x (c-a); sign gives the side of c relative to ab."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _within_bbox(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True if closed segments p1p2 and q1q2 share at least one point.

    Covers proper crossings, endpoint touches, and collinear overlap.
    """
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _within_bbox(q1, q2, p1):
        return True
    if d2 == 0 and _within_bbox(q1, q2, p2):
        return True
    if d3 == 0 and _within_bbox(p1, p2, q1):
        return True
    if d4 == 0 and _within_bbox(p1, p2, q2):
        return True
    return False


def segment_intersection_param(p1, p2, q1, q2) -> float | None:
    """Parameter t in [0, 1] along p1p2 where it crosses q1q2, or None.

    Returns the proper-crossing parameter; touches at a shared endpoint
    yield t at that endpoint. Collinear overlaps return the midpoint of
    the overlapping range.
    """
    rx, ry = p2[0] - p1[0], p2[1] - p1[1]
    sx, sy = q2[0] - q1[0], q2[1] - q1[1]
    denom = rx * sy - ry * sx
    qp = (q1[0] - p1[0], q1[1] - p1[1])
    if denom != 0.0:
        t = (qp[0] * sy - qp[1] * sx) / denom
        u = (qp[0] * ry - qp[1] * rx) / denom
        if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
            return t
        return None
    if not segments_intersect(p1, p2, q1, q2):
        return None
    # collinear overlap: project q endpoints onto p1p2
    rr = rx * rx + ry * ry
    if rr == 0.0:
        return 0.0
    t0 = ((q1[0] - p1[0]) * rx + (q1[1] - p1[1]) * ry) / rr
    t1 = ((q2[0] - p1[0]) * rx + (q2[1] - p1[1]) * ry) / rr
    lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
    return (lo + hi) / 2.0


def _point_on_segment(a, b, p) -> bool:
    return _orient(a, b, p) == 0.0 and _within_bbox(a, b, p)


def point_in_polygon(p, polygon: Iterable[Point]) -> bool:
    """Boundary-inclusive point-in-polygon test (even-odd rule)."""
    poly = list(polygon)
    x, y = p[0], p[1]
    inside = False
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if _point_on_segment(a, b, p):
            return True
        if (a[1] > y) != (b[1] > y):
            xcross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if x < xcross:
                inside = not inside
    return inside


def _point_strictly_in_polygon(p, polygon) -> bool:
    poly = list(polygon)
    for i in range(len(poly)):
        if _point_on_segment(poly[i], poly[(i + 1) % len(poly)], p):
            return False
    return point_in_polygon(p, poly)


def _segment_point_distance(a, b, p) -> float:
    ax, ay = b[0] - a[0], b[1] - a[1]
    det = ax * ax + ay * ay
    if det == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    t = ((p[0] - a[0]) * ax + (p[1] - a[1]) * ay) / det
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (a[0] + t * ax), p[1] - (a[1] + t * ay))


def _polygon_is_simple(poly: tuple[Point, ...]) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex by construction
            b1, b2 = poly[j], poly[(j + 1) % n]
            if segments_intersect(a1, a2, b1, b2):
                return False
    return True


def _check_zones_disjoint(zones: tuple[Zone, ...]) -> None:
    # Shared boundaries are fine; interiors must not overlap.
    for i in range(len(zones)):
        for j in range(i + 1, len(zones)):
            za, zb = zones[i], zones[j]
            na, nb = len(za.polygon), len(zb.polygon)
            for k in range(na):
                a1, a2 = za.polygon[k], za.polygon[(k + 1) % na]
                for m in range(nb):
                    b1, b2 = zb.polygon[m], zb.polygon[(m + 1) % nb]
                    d1 = _orient(b1, b2, a1)
                    d2 = _orient(b1, b2, a2)
                    d3 = _orient(a1, a2, b1)
                    d4 = _orient(a1, a2, b2)
                    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0) and (
                        (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0
                    ):
                        raise InvalidInputError(
                            f"zones {za.id} and {zb.id} overlap (edges cross)"
                        )
            for p in za.polygon:
                if _point_strictly_in_polygon(p, zb.polygon):
                    raise InvalidInputError(f"zones {za.id} and {zb.id} overlap")
            for p in zb.polygon:
                if _point_strictly_in_polygon(p, za.polygon):
                    raise InvalidInputError(f"zones {za.id} and {zb.id} overlap")


def _distance_to_any_zone_boundary(p, zones: tuple[Zone, ...]) -> float:
    best = math.inf
    for z in zones:
        n = len(z.polygon)
        for i in range(n):
            d = _segment_point_distance(z.polygon[i], z.polygon[(i + 1) % n], p)
            if d < best:
                best = d
    return best


# --------------------------------------------------------------------------
# operations


def count_wall_crossings(scenario: Scenario, start, end) -> int:
    """Number of attenuating walls crossed by the segment start-end.

    Each wall counts at most once; endpoint touches and collinear overlaps
    count as a crossing. Walls flagged non-attenuating exist only as
    movement obstacles and are ignored here.
    """
    if tuple(start) == tuple(end):
        raise InvalidInputError("degenerate segment: start equals end")
    count = 0
    for w in scenario.walls:
        if w.attenuating and segments_intersect(start, end, w.a, w.b):
            count += 1
    return count


def zone_of(scenario: Scenario, p) -> int | None:
    """Id of the zone containing p (boundary inclusive, lowest id wins), or None."""
    for z in sorted(scenario.zones, key=lambda z: z.id):
        if point_in_polygon(p, z.polygon):
            return z.id
    return None


def door_reference_points(door: Door, count: int) -> list[Point]:
    """``count`` points spread evenly along the door opening, symmetric about the center."""
    if count < 1:
        raise InvalidInputError(f"reference point count must be >= 1, got {count}")
    pts = []
    for k in range(count):
        s = -door.width / 2.0 + door.width * (k + 0.5) / count
        pts.append(
            Point(door.center.x + s * door.axis.x, door.center.y + s * door.axis.y)
        )
    return pts


def decompose_against_door(door: Door, p, reference) -> tuple[float, float]:
    """Split the offset of p from a reference point into along-axis and
    along-normal magnitudes (h, v); both are non-negative."""
    dx, dy = p[0] - reference[0], p[1] - reference[1]
    h = abs(dx * door.axis.x + dy * door.axis.y)
    v = abs(dx * door.normal.x + dy * door.normal.y)
    return h, v


# --------------------------------------------------------------------------
# scenario file format (TOML, versioned)

SCENARIO_FORMAT_VERSION = 1


def _fmt_float(v: float) -> str:
    out = repr(float(v))
    # TOML floats need a dot or exponent; repr of integral floats has ".0"
    return out


def _fmt_point(p) -> str:
    return f"[{_fmt_float(p[0])}, {_fmt_float(p[1])}]"


def scenario_to_toml(scenario: Scenario) -> str:
    """Serialize a scenario to the versioned TOML format."""
    lines = [
        f"format = {SCENARIO_FORMAT_VERSION}",
        f"speed_of_light = {_fmt_float(scenario.speed_of_light)}",
        "",
    ]
    for w in scenario.walls:
        lines += [
            "[[walls]]",
            f"a = {_fmt_point(w.a)}",
            f"b = {_fmt_point(w.b)}",
            f"attenuating = {'true' if w.attenuating else 'false'}",
            "",
        ]
    for d in scenario.doors:
        lines += [
            "[[doors]]",
            f"id = {d.id}",
            f"center = {_fmt_point(d.center)}",
            f"axis = {_fmt_point(d.axis)}",
            f"width = {_fmt_float(d.width)}",
            "",
        ]
    for z in scenario.zones:
        poly = ", ".join(_fmt_point(p) for p in z.polygon)
        lines += [
            "[[zones]]",
            f"id = {z.id}",
            f"polygon = [{poly}]",
            "",
        ]
    for a in scenario.anchors:
        lines += [
            "[[anchors]]",
            f"id = {a.id}",
            f"position = {_fmt_point(a.position)}",
            "",
        ]
    return "\n".join(lines)


def write_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(scenario_to_toml(scenario))


def _as_point(obj, what: str) -> Point:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise ScenarioFormatError(f"{what} must be a [x, y] array, got {obj!r}")
    try:
        p = Point(float(obj[0]), float(obj[1]))
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{what}: {exc}") from exc
    _require_finite(p, what)
    return p


def scenario_from_dict(data: dict) -> Scenario:
    if data.get("format") != SCENARIO_FORMAT_VERSION:
        raise ScenarioFormatError(
            f"missing or unsupported scenario format version: {data.get('format')!r}"
        )
    walls = [
        Wall(
            _as_point(w.get("a"), "wall.a"),
            _as_point(w.get("b"), "wall.b"),
            bool(w.get("attenuating", True)),
        )
        for w in data.get("walls", [])
    ]
    doors = [
        Door(
            int(d["id"]),
            _as_point(d.get("center"), "door.center"),
            _as_point(d.get("axis"), "door.axis"),
            float(d["width"]),
        )
        for d in data.get("doors", [])
    ]
    zones = [
        Zone(
            int(z["id"]),
            tuple(_as_point(p, "zone vertex") for p in z.get("polygon", [])),
        )
        for z in data.get("zones", [])
    ]
    anchors = [
        Anchor(int(a["id"]), _as_point(a.get("position"), "anchor.position"))
        for a in data.get("anchors", [])
    ]
    return Scenario(
        walls=tuple(walls),
        doors=tuple(doors),
        zones=tuple(zones),
        anchors=tuple(anchors),
        speed_of_light=float(data.get("speed_of_light", SPEED_OF_LIGHT)),
    )


def load_scenario(path) -> Scenario:
    """Load a scenario from its TOML file; raises ScenarioFormatError on bad input."""
    with open(path, "rb") as f:
        try:
            data = _toml.load(f)
        except _toml.TOMLDecodeError as exc:
            raise ScenarioFormatError(f"{path}: {exc}") from exc
    try:
        return scenario_from_dict(data)
    except KeyError as exc:
        raise ScenarioFormatError(f"{path}: missing field {exc}") from exc

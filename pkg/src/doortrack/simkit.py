"""Synthetic measurement generation: walking trajectories and per-anchor
time-of-arrival readings with through-wall delay, body-shadowing delay and
additive Gaussian noise.

Delay magnitudes are configured in nanoseconds; frame values are seconds.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError
from .world import Point, Scenario, count_wall_crossings

NS = 1e-9


class Pose(NamedTuple):
    t: float
    position: Point
    heading: float  # radians, world frame, [-pi, pi)


@dataclass(frozen=True)
class BodyShadowModel:
    """Extra delay from the user's own body as a function of the angle
    between the facing direction and the tag-to-anchor direction.

    Zero while the anchor is in front (theta <= theta_clear), a linear ramp
    up to ``delay_partial`` while partially covered, and a jump to
    ``delay_full`` once the body wholly covers the tag. Delays are in ns.
    """

    theta_clear: float = math.pi / 2
    theta_full: float = 5 * math.pi / 6
    delay_partial: float = 0.35
    delay_full: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.theta_clear < self.theta_full <= math.pi:
            raise InvalidInputError(
                f"need 0 < theta_clear < theta_full <= pi, got "
                f"({self.theta_clear}, {self.theta_full})"
            )
        if not 0.0 <= self.delay_partial <= self.delay_full:
            raise InvalidInputError(
                f"need 0 <= delay_partial <= delay_full, got "
                f"({self.delay_partial}, {self.delay_full})"
            )


@dataclass(frozen=True)
class SimConfig:
    """Measurement simulation knobs. Delay/noise values in ns, clock offset in s."""

    wall_delay: float = 0.3
    shadow: BodyShadowModel = field(default_factory=BodyShadowModel)
    toa_noise_sigma: float = 0.1
    clock_offset: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.wall_delay < 0:
            raise InvalidInputError(f"wall_delay must be >= 0, got {self.wall_delay}")
        if self.toa_noise_sigma < 0:
            raise InvalidInputError(
                f"toa_noise_sigma must be >= 0, got {self.toa_noise_sigma}"
            )


@dataclass(frozen=True)
class ToaFrame:
    """One epoch of per-anchor TOA readings, in seconds."""

    t: float
    toas: dict[int, float]

    def __post_init__(self):
        for aid, v in self.toas.items():
            if not math.isfinite(v):
                raise InvalidInputError(f"non-finite TOA for anchor {aid}: {v}")


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


def waypoint_trajectory(
    waypoints: Sequence, speed: float, dt: float
) -> list[Pose]:
    """Sample poses every ``dt`` seconds along the piecewise-linear path.

    Travel is at constant ``speed``; the heading is the direction of the leg
    being walked, switching exactly at turn waypoints. The final waypoint is
    always emitted.
    """
    if len(waypoints) < 2:
        raise InvalidInputError("need at least 2 waypoints")
    if speed <= 0 or dt <= 0:
        raise InvalidInputError(f"speed and dt must be > 0, got {speed}, {dt}")
    wps = [Point(float(p[0]), float(p[1])) for p in waypoints]
    legs = []
    cum = [0.0]
    for a, b in zip(wps[:-1], wps[1:]):
        length = (b - a).norm()
        if length == 0.0:
            raise InvalidInputError(f"duplicate consecutive waypoints at {tuple(a)}")
        legs.append((a, b, length, math.atan2(b.y - a.y, b.x - a.x)))
        cum.append(cum[-1] + length)
    total = cum[-1]

    def pose_at(s: float) -> Pose:
        i = min(bisect_right(cum, s) - 1, len(legs) - 1)
        a, b, length, heading = legs[i]
        f = (s - cum[i]) / length
        pos = Point(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
        return Pose(s / speed, pos, wrap_angle(heading))

    poses = []
    k = 0
    step = speed * dt
    while k * step < total - 1e-12:
        poses.append(pose_at(k * step))
        k += 1
    poses.append(pose_at(total))
    return poses


def shadow_delay(model: BodyShadowModel, theta: float) -> float:
    """Body-shadow delay in ns for a tag-to-anchor angle ``theta`` in [0, pi]."""
    if not 0.0 <= theta <= math.pi:
        raise InvalidInputError(f"theta must be in [0, pi], got {theta}")
    if theta <= model.theta_clear:
        return 0.0
    if theta <= model.theta_full:
        ramp = (theta - model.theta_clear) / (model.theta_full - model.theta_clear)
        return model.delay_partial * ramp
    return model.delay_full


def _anchor_angle(pose: Pose, anchor_pos: Point) -> float:
    dx = anchor_pos.x - pose.position.x
    dy = anchor_pos.y - pose.position.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return abs(wrap_angle(math.atan2(dy, dx) - pose.heading))


def _pose_rng(config: SimConfig, stream: int) -> np.random.Generator:
    # (seed, stream) keys independent substreams so poses can be generated
    # in parallel without sharing RNG state.
    return np.random.default_rng([int(config.rng_seed) & (2**63 - 1), int(stream)])


def simulate_toa(
    scenario: Scenario, config: SimConfig, pose: Pose, stream: int = 0
) -> ToaFrame:
    """Simulate one TOA frame for ``pose``.

    Per anchor: geometric flight time, plus wall_delay per attenuating wall
    crossed, plus the body-shadow delay for the anchor's bearing, plus the
    shared clock offset and Gaussian noise. Deterministic given
    (config.rng_seed, stream).
    """
    xmin, ymin, xmax, ymax = scenario.bounding_box()
    px, py = pose.position
    if not (xmin - 1e-9 <= px <= xmax + 1e-9 and ymin - 1e-9 <= py <= ymax + 1e-9):
        raise InvalidInputError(
            f"pose {tuple(pose.position)} outside scenario bounding box"
        )
    rng = _pose_rng(config, stream)
    c = scenario.speed_of_light
    toas: dict[int, float] = {}
    for anchor in scenario.anchors:
        d = (anchor.position - pose.position).norm()
        crossings = (
            count_wall_crossings(scenario, pose.position, anchor.position)
            if d > 0.0
            else 0
        )
        theta = _anchor_angle(pose, anchor.position)
        delay_ns = config.wall_delay * crossings + shadow_delay(config.shadow, theta)
        noise = rng.normal(0.0, config.toa_noise_sigma * NS)
        toas[anchor.id] = d / c + delay_ns * NS + config.clock_offset + noise
    return ToaFrame(t=pose.t, toas=toas)


def simulate_session(
    scenario: Scenario, config: SimConfig, trajectory: Sequence[Pose]
) -> list[ToaFrame]:
    """One frame per pose; pose index keys the per-pose noise substream."""
    if len(trajectory) == 0:
        raise InvalidInputError("trajectory must be non-empty")
    return [
        simulate_toa(scenario, config, pose, stream=i)
        for i, pose in enumerate(trajectory)
    ]


# --------------------------------------------------------------------------
# TOA CSV interchange: header `t,anchor_id,toa_s`, one row per (frame, anchor)


def write_toa_csv(frames: Iterable[ToaFrame], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "anchor_id", "toa_s"])
        for frame in frames:
            for aid in sorted(frame.toas):
                w.writerow([repr(frame.t), aid, repr(frame.toas[aid])])


def read_toa_csv(path) -> list[ToaFrame]:
    """Read a TOA log; consecutive rows sharing a timestamp form one frame."""
    frames: list[ToaFrame] = []
    cur_t: float | None = None
    cur: dict[int, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["t", "anchor_id", "toa_s"]:
            raise InvalidInputError(f"{path}: expected header t,anchor_id,toa_s")
        for row in reader:
            if not row:
                continue
            t, aid, toa = float(row[0]), int(row[1]), float(row[2])
            if cur_t is None or t != cur_t:
                if cur_t is not None:
                    frames.append(ToaFrame(t=cur_t, toas=cur))
                cur_t, cur = t, {}
            cur[aid] = toa
    if cur_t is not None:
        frames.append(ToaFrame(t=cur_t, toas=cur))
    return frames

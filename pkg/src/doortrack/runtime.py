"""Online tracking loop: estimate zone and heading from the filter state,
look up the calibrated pair list, form TDOAs, update.

Key switches are debounced: a new (zone, heading) must be observed for
three consecutive epochs before its pair list takes over.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .calibration import DirectionKey, Heading, PairTable, heading_class_of
from .errors import InvalidInputError
from .simkit import ToaFrame
from .tracking import (
    AnchorPair,
    EkfConfig,
    TrackerState,
    form_tdoas,
    initialize,
    make_pair,
    predict,
    update,
)
from .world import Scenario, zone_of

DEFAULT_SPEED_FLOOR = 0.15  # m/s
HYSTERESIS_EPOCHS = 3


def classify_heading(
    velocity, speed_floor: float = DEFAULT_SPEED_FLOOR
) -> Heading | None:
    """Cardinal class of a velocity vector, or None below the speed floor
    (callers keep their previous key in that case)."""
    vx, vy = float(velocity[0]), float(velocity[1])
    if (vx * vx + vy * vy) ** 0.5 < speed_floor:
        return None
    return heading_class_of(vx, vy)


@dataclass(frozen=True)
class RuntimeState:
    """Filter state plus the pair-selection loop's memory."""

    tracker: TrackerState
    active_key: DirectionKey | None = None
    pending_key: DirectionKey | None = None
    hysteresis_count: int = 0

    def __post_init__(self):
        if self.hysteresis_count < 0:
            raise InvalidInputError("hysteresis_count must be >= 0")


class LabeledFix(NamedTuple):
    """Position fix annotated with the key and pair list that produced it."""

    t: float
    x: float
    y: float
    vx: float
    vy: float
    p00: float
    p11: float
    zone: int | None  # zone of the key in use; None while on fallback
    heading: Heading | None
    pairs: tuple[AnchorPair, ...]
    flagged: bool  # predicted position fell outside every zone


def step(
    state: RuntimeState,
    frame: ToaFrame,
    table: PairTable,
    scenario: Scenario,
    ekf_config: EkfConfig,
    speed_floor: float = DEFAULT_SPEED_FLOOR,
    hysteresis_epochs: int = HYSTERESIS_EPOCHS,
) -> tuple[RuntimeState, LabeledFix]:
    """Advance one epoch: predict, re-estimate the direction key, update with
    the key's pairs, emit the labeled fix."""
    dt = frame.t - state.tracker.t
    if dt < 0:
        raise InvalidInputError(f"frame at t={frame.t} precedes tracker time")
    tracker = predict(state.tracker, dt, ekf_config)

    zone = zone_of(scenario, (tracker.x[0], tracker.x[1]))
    heading = classify_heading(tracker.velocity, speed_floor)
    if zone is None:
        observed = None  # out of all zones: leave key memory alone this epoch
    elif heading is None:
        observed = state.active_key  # too slow to trust the velocity direction
    else:
        observed = DirectionKey(zone, heading)

    active, pending, count = state.active_key, state.pending_key, state.hysteresis_count
    if observed is None or observed == active:
        pending, count = None, 0
    elif observed == pending:
        count += 1
        if count >= hysteresis_epochs:
            active, pending, count = observed, None, 0
    else:
        pending, count = observed, 1

    flagged = zone is None
    pairs = table.fallback if flagged else table.pairs_for(active)
    tracker = update(
        tracker, form_tdoas(frame, pairs, scenario.speed_of_light), scenario, ekf_config
    )
    used_key = None if flagged else active
    fix = LabeledFix(
        t=tracker.t,
        x=float(tracker.x[0]),
        y=float(tracker.x[1]),
        vx=float(tracker.x[2]),
        vy=float(tracker.x[3]),
        p00=float(tracker.P[0, 0]),
        p11=float(tracker.P[1, 1]),
        zone=used_key.zone if used_key else None,
        heading=used_key.heading if used_key else None,
        pairs=pairs,
        flagged=flagged,
    )
    return RuntimeState(tracker, active, pending, count), fix


def track_session(
    scenario: Scenario,
    frames: Sequence[ToaFrame],
    table: PairTable,
    ekf_config: EkfConfig | None = None,
    speed_floor: float = DEFAULT_SPEED_FLOOR,
    hysteresis_epochs: int = HYSTERESIS_EPOCHS,
) -> tuple[list[LabeledFix], RuntimeState]:
    """Track a whole session; the filter initializes from the first frame
    with the fallback pairs (no key is known before the first estimate)."""
    if len(frames) == 0:
        raise InvalidInputError("no frames to track")
    ekf_config = ekf_config or EkfConfig()
    table.validate_anchors(scenario)
    tracker = initialize(frames, table.fallback, scenario, ekf_config)
    state = RuntimeState(tracker)
    fixes: list[LabeledFix] = []
    for frame in frames:
        state, fix = step(
            state, frame, table, scenario, ekf_config, speed_floor, hysteresis_epochs
        )
        fixes.append(fix)
    return fixes, state


# --------------------------------------------------------------------------
# labeled fix CSV: fix columns extended with zone,heading,pairs

LABELED_FIX_HEADER = ["t", "x", "y", "vx", "vy", "p00", "p11", "zone", "heading", "pairs"]


def write_labeled_fixes_csv(fixes, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(LABELED_FIX_HEADER)
        for fx in fixes:
            w.writerow(
                [
                    repr(fx.t),
                    repr(fx.x),
                    repr(fx.y),
                    repr(fx.vx),
                    repr(fx.vy),
                    repr(fx.p00),
                    repr(fx.p11),
                    "" if fx.zone is None else fx.zone,
                    "" if fx.heading is None else fx.heading.word,
                    " ".join(f"({p.i} {p.j})" for p in fx.pairs),
                ]
            )


def read_labeled_fixes_csv(path) -> list[LabeledFix]:
    out: list[LabeledFix] = []
    words = {h.word: h for h in Heading}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:10]] != LABELED_FIX_HEADER:
            raise InvalidInputError(
                f"{path}: expected header {','.join(LABELED_FIX_HEADER)}"
            )
        for row in reader:
            if not row:
                continue
            pairs = tuple(
                make_pair(int(i), int(j))
                for i, j in (
                    tok.strip("()").split() for tok in row[9].split(") ") if tok
                )
            )
            out.append(
                LabeledFix(
                    *(float(v) for v in row[:7]),
                    zone=int(row[7]) if row[7] else None,
                    heading=words[row[8]] if row[8] else None,
                    pairs=pairs,
                    flagged=row[7] == "",
                )
            )
    return out

"""Anchor-pair set calibration from door transitions.

Historical TOA data is replayed with a baseline filter to find doorway
crossings; candidate pair sets are then scored per zone and travel
direction by how tightly their fixes hug the known doorway geometry, and
the cheapest set per (zone, heading) key wins.
"""

from __future__ import annotations

import csv
import itertools
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    CalibrationError,
    InvalidInputError,
    ScenarioFormatError,
    ZeroEvidenceError,
)
from .simkit import ToaFrame
from .tracking import (
    AnchorPair,
    EkfConfig,
    all_pairs,
    make_pair,
    run_fixed_pairs,
    run_pair_sets,
)
from .world import (
    Door,
    Point,
    Scenario,
    door_reference_points,
    segment_intersection_param,
    zone_of,
)

DOOR_CROSS_MARGIN = 0.3  # widening of the opening segment per side, meters
EVAL_BAND = 1.0  # fixes within this normal distance of the door line count
DEFAULT_WINDOW_HALF_WIDTH = 1.5  # seconds
DEFAULT_REF_POINT_COUNT = 5
DEFAULT_CANDIDATE_SIZES = (4, 5, 6)
_ZONE_PROBE_STEPS = (0.15, 0.3, 0.5, 1.0)


class Heading(Enum):
    """Cardinal heading classes; arrows name them in the pair-table file."""

    EAST = "right"
    NORTH = "up"
    WEST = "left"
    SOUTH = "down"

    @property
    def word(self) -> str:
        return self.value


_HEADING_ORDER = (Heading.EAST, Heading.NORTH, Heading.WEST, Heading.SOUTH)
_WORD_TO_HEADING = {h.value: h for h in Heading}


def heading_class_of(vx: float, vy: float) -> Heading:
    """Cardinal class of a direction vector; 45-degree boundaries go to the
    counterclockwise neighbor."""
    ang = math.atan2(vy, vx)
    idx = int(math.floor((ang + math.pi / 4) / (math.pi / 2))) % 4
    return _HEADING_ORDER[idx]


class DirectionKey(NamedTuple):
    zone: int
    heading: Heading


@dataclass(frozen=True)
class TransitionWindow:
    """Frames around one doorway crossing.

    ``direction`` is +1 when travel follows the door normal, -1 against.
    """

    door_id: int
    direction: int
    frames: tuple[ToaFrame, ...]
    t_cross: float

    def __post_init__(self):
        if self.direction not in (+1, -1):
            raise InvalidInputError(f"direction must be +1 or -1, got {self.direction}")
        if len(self.frames) == 0:
            raise InvalidInputError("transition window has no frames")
        ts = [f.t for f in self.frames]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("window frames must be time-ordered")
        object.__setattr__(self, "frames", tuple(self.frames))


@dataclass(frozen=True)
class PairTable:
    """Calibrated pair lists per (zone, heading), with a fallback list."""

    entries: dict[DirectionKey, tuple[AnchorPair, ...]]
    fallback: tuple[AnchorPair, ...]

    def __post_init__(self):
        entries = {
            k: tuple(make_pair(*p) for p in v) for k, v in self.entries.items()
        }
        object.__setattr__(self, "entries", entries)
        object.__setattr__(
            self, "fallback", tuple(make_pair(*p) for p in self.fallback)
        )
        for key, pairs in entries.items():
            if len(pairs) < 3:
                raise InvalidInputError(
                    f"key {key}: needs >= 3 pairs for 2-D observability"
                )
        if len(self.fallback) < 3:
            raise InvalidInputError("fallback list needs >= 3 pairs")

    def pairs_for(self, key: DirectionKey | None) -> tuple[AnchorPair, ...]:
        if key is not None and key in self.entries:
            return self.entries[key]
        return self.fallback

    def validate_anchors(self, scenario: Scenario) -> None:
        known = set(scenario.anchor_ids())
        for key, pairs in list(self.entries.items()) + [(None, self.fallback)]:
            for p in pairs:
                if p.i not in known or p.j not in known:
                    raise InvalidInputError(
                        f"pair {tuple(p)} references unknown anchors (key {key})"
                    )


class WindowCost(NamedTuple):
    """Cost of one candidate set over one window."""

    cost: float
    n_points: int


@dataclass
class KeyReport:
    """Every candidate's score for one direction key."""

    key: DirectionKey
    candidates: list[tuple[AnchorPair, ...]]
    costs: np.ndarray  # inf where disqualified
    n_points: np.ndarray
    per_window: np.ndarray  # (n_candidates, n_windows); nan where no evidence
    selected: int | None  # candidate index, None when the key fell back
    n_windows: int

    def ranked_order(self) -> list[int]:
        """Candidate indices sorted by (cost, size, lex); disqualified last."""
        order = sorted(
            range(len(self.candidates)),
            key=lambda i: (
                self.costs[i],
                len(self.candidates[i]),
                self.candidates[i],
            ),
        )
        return order


@dataclass
class CostReport:
    keys: list[KeyReport] = field(default_factory=list)
    unresolved_windows: int = 0

    def for_key(self, key: DirectionKey) -> KeyReport:
        for kr in self.keys:
            if kr.key == key:
                return kr
        raise KeyError(key)


# --------------------------------------------------------------------------
# transition extraction


def _door_crossing(door: Door, p0, p1) -> tuple[float, int] | None:
    """Crossing parameter along p0->p1 through the widened opening, with
    travel direction relative to the door normal; None when not crossing."""
    e1, e2 = door.endpoints(margin=DOOR_CROSS_MARGIN)
    t = segment_intersection_param(p0, p1, e1, e2)
    if t is None:
        return None
    dot = (p1[0] - p0[0]) * door.normal.x + (p1[1] - p0[1]) * door.normal.y
    if dot == 0.0:
        return None  # sliding along the opening, no transition
    return t, (1 if dot > 0 else -1)


def extract_transitions(
    scenario: Scenario,
    session: Sequence[ToaFrame],
    baseline_pairs: Sequence[AnchorPair],
    window_half_width: float = DEFAULT_WINDOW_HALF_WIDTH,
) -> list[TransitionWindow]:
    """Replay the session with a baseline filter and cut a window around
    every doorway crossing of the fix trajectory.

    Crossings on the same door closer than twice the half width merge,
    keeping the later one.
    """
    ts = [f.t for f in session]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise InvalidInputError("session frames must be time-ordered")
    if len(baseline_pairs) < 3:
        raise InvalidInputError("baseline needs >= 3 pairs")
    fixes, _ = run_fixed_pairs(scenario, session, baseline_pairs, EkfConfig())

    crossings: dict[int, list[tuple[float, int]]] = {d.id: [] for d in scenario.doors}
    for k in range(len(fixes) - 1):
        f0, f1 = fixes[k], fixes[k + 1]
        p0, p1 = (f0.x, f0.y), (f1.x, f1.y)
        if p0 == p1:
            continue
        for door in scenario.doors:
            hit = _door_crossing(door, p0, p1)
            if hit is None:
                continue
            t_param, direction = hit
            t_cross = f0.t + t_param * (f1.t - f0.t)
            crossings[door.id].append((t_cross, direction))

    windows: list[TransitionWindow] = []
    for door in scenario.doors:
        merged: list[tuple[float, int]] = []
        for t_cross, direction in sorted(crossings[door.id]):
            if merged and t_cross - merged[-1][0] < 2 * window_half_width:
                merged[-1] = (t_cross, direction)  # keep the later crossing
            else:
                merged.append((t_cross, direction))
        for t_cross, direction in merged:
            frames = tuple(
                f for f in session if t_cross - window_half_width <= f.t <= t_cross + window_half_width
            )
            if frames:
                windows.append(
                    TransitionWindow(
                        door_id=door.id,
                        direction=direction,
                        frames=frames,
                        t_cross=t_cross,
                    )
                )
    windows.sort(key=lambda w: w.t_cross)
    return windows


def window_key(scenario: Scenario, window: TransitionWindow) -> DirectionKey | None:
    """(zone being entered, cardinal class of the travel direction).

    The entered zone is probed a short distance past the door center along
    the travel direction; None when no zone claims any probe point.
    """
    door = scenario.door_by_id(window.door_id)
    tx = door.normal.x * window.direction
    ty = door.normal.y * window.direction
    heading = heading_class_of(tx, ty)
    for step in _ZONE_PROBE_STEPS:
        z = zone_of(
            scenario, Point(door.center.x + tx * step, door.center.y + ty * step)
        )
        if z is not None:
            return DirectionKey(z, heading)
    return None


# --------------------------------------------------------------------------
# candidate evaluation


def _band_costs(
    scenario: Scenario,
    window: TransitionWindow,
    positions: np.ndarray,
    ref_point_count: int,
    band: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated h+v cost and matched-fix count per candidate.

    positions: (n_candidates, n_frames, 2) filter outputs over the window.
    """
    door = scenario.door_by_id(window.door_id)
    axis = np.array([door.axis.x, door.axis.y])
    normal = np.array([door.normal.x, door.normal.y])
    refs = np.array(
        [[p.x, p.y] for p in door_reference_points(door, ref_point_count)]
    )  # (R, 2)

    rel_center = positions - np.array([door.center.x, door.center.y])
    v_center = np.abs(rel_center @ normal)  # (C, F)
    in_band = v_center <= band

    diffs = positions[:, :, None, :] - refs[None, None, :, :]  # (C, F, R, 2)
    d2 = np.sum(diffs * diffs, axis=3)
    nearest = np.argmin(d2, axis=2)  # (C, F)
    chosen = np.take_along_axis(diffs, nearest[:, :, None, None], axis=2)[:, :, 0, :]
    h = np.abs(chosen @ axis)
    v = np.abs(chosen @ normal)
    contrib = np.where(in_band, h + v, 0.0)
    return contrib.sum(axis=1), in_band.sum(axis=1)


def _evaluate_candidates_on_windows(
    scenario: Scenario,
    windows: Sequence[TransitionWindow],
    candidates: Sequence[tuple[AnchorPair, ...]],
    ekf_config: EkfConfig,
    ref_point_count: int,
    band: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Total cost, total matched fixes and per-window costs for every candidate.

    A window with zero in-band fixes, or a diverged filter, disqualifies the
    candidate (total cost inf; per-window cell nan).
    """
    n_cand = len(candidates)
    total = np.zeros(n_cand)
    n_points = np.zeros(n_cand, dtype=np.int64)
    per_window = np.zeros((n_cand, len(windows)))
    disqualified = np.zeros(n_cand, dtype=bool)
    for wi, window in enumerate(windows):
        positions, ok = run_pair_sets(
            scenario, window.frames, candidates, ekf_config
        )
        cost, n = _band_costs(scenario, window, positions, ref_point_count, band)
        bad = ~ok | (n == 0)
        disqualified |= bad
        per_window[:, wi] = np.where(bad, np.nan, cost)
        total += np.where(bad, 0.0, cost)
        n_points += np.where(bad, 0, n)
    total[disqualified] = np.inf
    return total, n_points, per_window


def transition_cost(
    scenario: Scenario,
    window: TransitionWindow,
    pairs: Sequence[AnchorPair],
    ref_point_count: int = DEFAULT_REF_POINT_COUNT,
    ekf_config: EkfConfig | None = None,
    band: float = EVAL_BAND,
) -> WindowCost:
    """Doorway-hugging cost of one pair set over one window.

    A fresh filter is initialized from the window's opening frames and run
    across the window; every fix within ``band`` of the door line is matched
    to its nearest reference point and contributes its along-door plus
    across-door offset.
    """
    if ref_point_count < 1:
        raise InvalidInputError("ref_point_count must be >= 1")
    ekf_config = ekf_config or EkfConfig()
    candidate = tuple(make_pair(*p) for p in pairs)
    total, n_points, _ = _evaluate_candidates_on_windows(
        scenario, [window], [candidate], ekf_config, ref_point_count, band
    )
    if not math.isfinite(total[0]):
        raise ZeroEvidenceError(
            f"no usable fixes within {band} m of door {window.door_id} "
            f"for pairs {[tuple(p) for p in candidate]}"
        )
    return WindowCost(cost=float(total[0]), n_points=int(n_points[0]))


def enumerate_candidates(
    base_pairs: Sequence[AnchorPair], sizes: Sequence[int]
) -> list[tuple[AnchorPair, ...]]:
    """All pair subsets of the given sizes, smallest size first, lexicographic
    within a size. This order is also the selection tie-break order."""
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes:
        raise InvalidInputError("candidate_sizes must be non-empty")
    for s in sizes:
        if s < 3:
            raise InvalidInputError(f"candidate size {s} < 3 cannot observe 2-D position")
        if s > len(base_pairs):
            raise InvalidInputError(
                f"candidate size {s} exceeds the {len(base_pairs)} available pairs"
            )
    out: list[tuple[AnchorPair, ...]] = []
    for s in sizes:
        out.extend(itertools.combinations(base_pairs, s))
    return out


def _eval_chunk_task(args):
    (scenario, windows, chunk, ekf_config, ref_point_count, band) = args
    return _evaluate_candidates_on_windows(
        scenario, windows, chunk, ekf_config, ref_point_count, band
    )


def _evaluate_key(
    scenario: Scenario,
    windows: Sequence[TransitionWindow],
    candidates: Sequence[tuple[AnchorPair, ...]],
    ekf_config: EkfConfig,
    ref_point_count: int,
    band: float,
    workers: int,
    pool_chunk: int = 4096,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if workers <= 1 or len(candidates) <= pool_chunk:
        return _evaluate_candidates_on_windows(
            scenario, windows, candidates, ekf_config, ref_point_count, band
        )
    chunks = [
        candidates[lo : lo + pool_chunk]
        for lo in range(0, len(candidates), pool_chunk)
    ]
    tasks = [
        (scenario, tuple(windows), chunk, ekf_config, ref_point_count, band)
        for chunk in chunks
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_eval_chunk_task, tasks))
    # merge in candidate-index order regardless of completion order
    total = np.concatenate([r[0] for r in results])
    n_points = np.concatenate([r[1] for r in results])
    per_window = np.concatenate([r[2] for r in results])
    return total, n_points, per_window


def select_pairs(
    scenario: Scenario,
    windows: Sequence[TransitionWindow],
    candidate_sizes: Sequence[int] = DEFAULT_CANDIDATE_SIZES,
    ekf_config: EkfConfig | None = None,
    ref_point_count: int = DEFAULT_REF_POINT_COUNT,
    band: float = EVAL_BAND,
    workers: int = 1,
    method: str = "exhaustive",
) -> tuple[PairTable, CostReport]:
    """Pick the cheapest pair set per direction key.

    Exhaustive search scores every subset of each requested size; ties break
    toward smaller sets, then lexicographic pair order. ``method="greedy"``
    grows sets by forward selection instead, for larger anchor counts.
    """
    ekf_config = ekf_config or EkfConfig()
    base = all_pairs(scenario.anchor_ids())

    grouped: dict[DirectionKey, list[TransitionWindow]] = {}
    unresolved = 0
    for w in windows:
        key = window_key(scenario, w)
        if key is None:
            unresolved += 1
            continue
        grouped.setdefault(key, []).append(w)
    if not grouped:
        raise CalibrationError("no usable transition windows")

    report = CostReport(unresolved_windows=unresolved)
    entries: dict[DirectionKey, tuple[AnchorPair, ...]] = {}
    for key in sorted(grouped, key=lambda k: (k.zone, _HEADING_ORDER.index(k.heading))):
        key_windows = grouped[key]
        if method == "greedy":
            candidates = _greedy_candidates(
                scenario, key_windows, base, candidate_sizes, ekf_config,
                ref_point_count, band,
            )
        elif method == "exhaustive":
            candidates = enumerate_candidates(base, candidate_sizes)
        else:
            raise InvalidInputError(f"unknown search method {method!r}")
        total, n_points, per_window = _evaluate_key(
            scenario, key_windows, candidates, ekf_config,
            ref_point_count, band, workers,
        )
        if np.isfinite(total).any():
            selected = int(np.argmin(total))  # enumeration order is tie-break order
            entries[key] = candidates[selected]
        else:
            selected = None  # every candidate disqualified: key falls back
        report.keys.append(
            KeyReport(
                key=key,
                candidates=list(candidates),
                costs=total,
                n_points=n_points,
                per_window=per_window,
                selected=selected,
                n_windows=len(key_windows),
            )
        )
    table = PairTable(entries=entries, fallback=tuple(base))
    return table, report


def select_single_set(
    scenario: Scenario,
    windows: Sequence[TransitionWindow],
    size: int = 4,
    ekf_config: EkfConfig | None = None,
    ref_point_count: int = DEFAULT_REF_POINT_COUNT,
    band: float = EVAL_BAND,
) -> tuple[tuple[AnchorPair, ...], float]:
    """Best single pair set of the given size for the whole area: every
    window contributes regardless of zone or direction. This is the
    one-set-everywhere baseline that zone/heading adaptation is compared
    against."""
    if not windows:
        raise CalibrationError("no transition windows to evaluate")
    ekf_config = ekf_config or EkfConfig()
    candidates = enumerate_candidates(all_pairs(scenario.anchor_ids()), [size])
    total, _, _ = _evaluate_candidates_on_windows(
        scenario, windows, candidates, ekf_config, ref_point_count, band
    )
    if not np.isfinite(total).any():
        raise CalibrationError("every candidate set was disqualified")
    best = int(np.argmin(total))
    return candidates[best], float(total[best])


def _greedy_candidates(
    scenario, windows, base, sizes, ekf_config, ref_point_count, band
) -> list[tuple[AnchorPair, ...]]:
    """Forward selection: grow the set one pair at a time, keeping every
    grown set whose size is requested as a candidate."""
    sizes = sorted(set(int(s) for s in sizes))
    if sizes and sizes[0] < 3:
        raise InvalidInputError("candidate sizes must be >= 3")
    current: tuple[AnchorPair, ...] = ()
    out: list[tuple[AnchorPair, ...]] = []
    while len(current) < max(sizes):
        grown = [
            tuple(sorted(current + (p,))) for p in base if p not in current
        ]
        total, _, _ = _evaluate_candidates_on_windows(
            scenario, windows, grown, ekf_config, ref_point_count, band
        )
        if len(current) + 1 >= 3 and np.isfinite(total).any():
            current = grown[int(np.argmin(total))]
        else:
            # sets this small cannot be scored reliably; extend lexicographically
            current = grown[0]
        if len(current) in sizes:
            out.append(current)
    if not out:
        raise CalibrationError("greedy selection produced no candidates")
    return out


# --------------------------------------------------------------------------
# pair table text format


_PAIR_RE = re.compile(r"\(\s*(\d+)\s+(\d+)\s*\)")
_LINE_RE = re.compile(r"^\s*(\S+)\s+(\S+)?\s*:\s*(.*)$")


def _format_pairs(pairs: Iterable[AnchorPair]) -> str:
    return " ".join(f"({p.i} {p.j})" for p in pairs)


def write_pair_table(table: PairTable, path) -> None:
    """One `<zone> <up|down|left|right> : (i j) ...` line per key, plus a
    `fallback :` line."""
    lines = []
    for key in sorted(
        table.entries, key=lambda k: (k.zone, _HEADING_ORDER.index(k.heading))
    ):
        lines.append(f"{key.zone} {key.heading.word} : {_format_pairs(table.entries[key])}")
    lines.append(f"fallback : {_format_pairs(table.fallback)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def _parse_pairs(text: str, lineno: int) -> tuple[AnchorPair, ...]:
    rest = _PAIR_RE.sub("", text).strip()
    if rest:
        raise ScenarioFormatError(f"unparseable pair text {rest!r}", line=lineno)
    pairs = tuple(make_pair(int(i), int(j)) for i, j in _PAIR_RE.findall(text))
    if not pairs:
        raise ScenarioFormatError("no pairs on line", line=lineno)
    return pairs


def parse_pair_table(path) -> PairTable:
    """Inverse of write_pair_table; `#` starts a comment, pairs normalize to
    canonical (i<j) order."""
    entries: dict[DirectionKey, tuple[AnchorPair, ...]] = {}
    fallback: tuple[AnchorPair, ...] | None = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = _LINE_RE.match(line)
            if m is None:
                raise ScenarioFormatError(f"malformed line {raw.rstrip()!r}", line=lineno)
            first, second, rest = m.group(1), m.group(2), m.group(3)
            if first == "fallback":
                if second is not None:
                    raise ScenarioFormatError(
                        f"unexpected token {second!r} after 'fallback'", line=lineno
                    )
                fallback = _parse_pairs(rest, lineno)
                continue
            try:
                zone = int(first)
            except ValueError:
                raise ScenarioFormatError(f"bad zone id {first!r}", line=lineno) from None
            if second not in _WORD_TO_HEADING:
                raise ScenarioFormatError(
                    f"bad heading {second!r} (want up/down/left/right)", line=lineno
                )
            key = DirectionKey(zone, _WORD_TO_HEADING[second])
            if key in entries:
                raise ScenarioFormatError(f"duplicate key {key}", line=lineno)
            entries[key] = _parse_pairs(rest, lineno)
    if fallback is None:
        # tables written by hand may omit it; derive from the anchors seen
        ids = sorted({a for pairs in entries.values() for p in pairs for a in p})
        if len(ids) < 2:
            raise ScenarioFormatError("pair table is empty")
        fallback = tuple(all_pairs(ids))
    return PairTable(entries=entries, fallback=fallback)


# --------------------------------------------------------------------------
# cost report CSV: zone,heading,set_rank,pairs,cost_m,n_points


def write_cost_report_csv(report: CostReport, path, top: int | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["zone", "heading", "set_rank", "pairs", "cost_m", "n_points"])
        for kr in report.keys:
            order = kr.ranked_order()
            if top is not None:
                order = order[:top]
            for rank, idx in enumerate(order):
                w.writerow(
                    [
                        kr.key.zone,
                        kr.key.heading.word,
                        rank,
                        _format_pairs(kr.candidates[idx]),
                        repr(float(kr.costs[idx])),
                        int(kr.n_points[idx]),
                    ]
                )

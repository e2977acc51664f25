"""TDOA measurement formation and the constant-velocity EKF tracker.

State vector is [px, py, vx, vy]; TDOA values are stored as range
differences in meters so the measurement model stays unitless.

The low-level predict/update kernels accept any leading batch shape, so a
single filter and a bank of thousands of candidate filters (used during
calibration) share the same arithmetic.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    FilterDivergenceError,
    InitializationError,
    InvalidInputError,
    SingularityError,
)
from .simkit import ToaFrame
from .world import Scenario

SINGULAR_DISTANCE = 1e-6
INIT_GRID_PITCH = 0.25


class AnchorPair(NamedTuple):
    i: int
    j: int


def make_pair(i: int, j: int) -> AnchorPair:
    """Canonical (i < j) anchor pair."""
    if i == j:
        raise InvalidInputError(f"anchor pair needs two distinct anchors, got ({i},{j})")
    return AnchorPair(i, j) if i < j else AnchorPair(j, i)


class TdoaMeasurement(NamedTuple):
    pair: AnchorPair
    value: float  # range difference d_i - d_j in meters


@dataclass(frozen=True)
class EkfConfig:
    process_noise_accel_sigma: float = 0.7  # m/s^2
    tdoa_noise_sigma: float = 0.15  # m
    gate_threshold: float = 9.0  # chi-square, 1 dof per scalar update
    init_position_sigma: float = 3.0  # m
    init_velocity_sigma: float = 1.0  # m/s

    def __post_init__(self):
        for name in (
            "process_noise_accel_sigma",
            "tdoa_noise_sigma",
            "gate_threshold",
            "init_position_sigma",
            "init_velocity_sigma",
        ):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be > 0")


@dataclass(frozen=True)
class TrackerState:
    """Position/velocity estimate with covariance at time t."""

    x: np.ndarray  # shape (4,)
    P: np.ndarray  # shape (4, 4)
    t: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(4).copy()
        P = np.asarray(self.P, dtype=float).reshape(4, 4).copy()
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(P)):
            raise InvalidInputError("tracker state must be finite")
        if np.max(np.abs(P - P.T)) > 1e-9:
            raise InvalidInputError("covariance must be symmetric within 1e-9")
        if np.min(np.diag(P)) < 0:
            raise InvalidInputError("covariance diagonal must be non-negative")
        x.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @property
    def position(self) -> np.ndarray:
        return self.x[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:]


class Fix(NamedTuple):
    """One exported position fix."""

    t: float
    x: float
    y: float
    vx: float
    vy: float
    p00: float
    p11: float


def fix_from_state(state: TrackerState) -> Fix:
    return Fix(
        state.t,
        float(state.x[0]),
        float(state.x[1]),
        float(state.x[2]),
        float(state.x[3]),
        float(state.P[0, 0]),
        float(state.P[1, 1]),
    )


# --------------------------------------------------------------------------
# measurement formation


def all_pairs(anchor_ids: Sequence[int]) -> list[AnchorPair]:
    """All unordered anchor pairs in canonical lexicographic order."""
    ids = list(anchor_ids)
    if len(ids) != len(set(ids)):
        raise InvalidInputError(f"anchor ids must be unique: {ids}")
    if len(ids) < 2:
        raise InvalidInputError("need at least 2 anchors to form pairs")
    return [AnchorPair(i, j) for i, j in itertools.combinations(sorted(ids), 2)]


def form_tdoas(
    frame: ToaFrame, pairs: Sequence[AnchorPair], c: float
) -> list[TdoaMeasurement]:
    """Range differences c*(toa_i - toa_j) for every pair present in the frame.

    Pairs referencing an anchor missing from the frame are skipped; output
    order follows input order.
    """
    out = []
    for p in pairs:
        ti = frame.toas.get(p.i)
        tj = frame.toas.get(p.j)
        if ti is None or tj is None:
            continue
        out.append(TdoaMeasurement(p, c * (ti - tj)))
    return out


# --------------------------------------------------------------------------
# batch-shape-agnostic filter kernels


def cv_predict_arrays(x, P, dt: float, accel_var: float):
    """Constant-velocity predict for x (...,4) and P (...,4,4).

    Process noise is the continuous white-acceleration model, which makes
    predictions compose exactly over split time steps.
    """
    xn = np.empty_like(x)
    xn[..., 0] = x[..., 0] + dt * x[..., 2]
    xn[..., 1] = x[..., 1] + dt * x[..., 3]
    xn[..., 2] = x[..., 2]
    xn[..., 3] = x[..., 3]

    Ppp = P[..., :2, :2]
    Ppv = P[..., :2, 2:]
    Pvp = P[..., 2:, :2]
    Pvv = P[..., 2:, 2:]
    Pn = np.empty_like(P)
    Pn[..., :2, :2] = Ppp + dt * (Ppv + Pvp) + (dt * dt) * Pvv
    Pn[..., :2, 2:] = Ppv + dt * Pvv
    Pn[..., 2:, :2] = Pvp + dt * Pvv
    Pn[..., 2:, 2:] = Pvv

    q = accel_var
    dt2 = dt * dt
    dt3 = dt2 * dt
    for axis in (0, 1):
        Pn[..., axis, axis] += q * dt3 / 3.0
        Pn[..., axis, axis + 2] += q * dt2 / 2.0
        Pn[..., axis + 2, axis] += q * dt2 / 2.0
        Pn[..., axis + 2, axis + 2] += q * dt
    return xn, Pn


def tdoa_update_arrays(x, P, z, ai, aj, r_var: float, gate: float):
    """One gated scalar TDOA update on x (...,4), P (...,4,4).

    z is the measured range difference (...,); ai/aj the anchor coordinates
    (...,2). Returns (x', P', flags) where flags carries boolean arrays
    ``applied``, ``gated``, ``singular`` (state within SINGULAR_DISTANCE of
    an anchor) and ``dead`` (non-finite innovation covariance). Entries that
    are gated, singular or dead pass through unchanged.
    """
    dxi = x[..., 0] - ai[..., 0]
    dyi = x[..., 1] - ai[..., 1]
    dxj = x[..., 0] - aj[..., 0]
    dyj = x[..., 1] - aj[..., 1]
    di = np.sqrt(dxi * dxi + dyi * dyi)
    dj = np.sqrt(dxj * dxj + dyj * dyj)
    singular = (di < SINGULAR_DISTANCE) | (dj < SINGULAR_DISTANCE)
    di_s = np.where(singular, 1.0, di)
    dj_s = np.where(singular, 1.0, dj)
    ux = dxi / di_s - dxj / dj_s
    uy = dyi / di_s - dyj / dj_s
    nu = z - (di - dj)

    PHt = P[..., :, 0] * ux[..., None] + P[..., :, 1] * uy[..., None]
    S = ux * PHt[..., 0] + uy * PHt[..., 1] + r_var
    dead = ~np.isfinite(S) | ~np.isfinite(nu) | (S <= 0.0)
    S_s = np.where(dead, 1.0, S)
    gated = (nu * nu) / S_s > gate
    apply_mask = ~(singular | dead | gated)

    K = PHt / S_s[..., None]
    x_new = x + K * nu[..., None]
    P_new = P - K[..., :, None] * PHt[..., None, :]
    P_new = 0.5 * (P_new + np.swapaxes(P_new, -1, -2))

    x_out = np.where(apply_mask[..., None], x_new, x)
    P_out = np.where(apply_mask[..., None, None], P_new, P)
    flags = {
        "applied": apply_mask,
        "gated": gated,
        "singular": singular,
        "dead": dead,
    }
    return x_out, P_out, flags


# --------------------------------------------------------------------------
# single-filter operations


def predict(state: TrackerState, dt: float, config: EkfConfig) -> TrackerState:
    """Advance the state by dt seconds under the constant-velocity model."""
    if dt < 0:
        raise InvalidInputError(f"dt must be >= 0, got {dt}")
    q = config.process_noise_accel_sigma**2
    x, P = cv_predict_arrays(state.x, state.P, dt, q)
    return TrackerState(x=x, P=P, t=state.t + dt)


def tdoa_jacobian(position, pair: AnchorPair, scenario: Scenario) -> np.ndarray:
    """Row of partials of the range difference w.r.t. [px, py, vx, vy]."""
    p = np.asarray([position[0], position[1]], dtype=float)
    ai = scenario.anchor_by_id(pair.i).position
    aj = scenario.anchor_by_id(pair.j).position
    vi = p - np.asarray(ai)
    vj = p - np.asarray(aj)
    di = float(np.hypot(*vi))
    dj = float(np.hypot(*vj))
    if di < SINGULAR_DISTANCE or dj < SINGULAR_DISTANCE:
        raise SingularityError(
            f"position {tuple(p)} coincides with an anchor of pair {tuple(pair)}"
        )
    u = vi / di - vj / dj
    return np.array([u[0], u[1], 0.0, 0.0])


def update(
    state: TrackerState,
    measurements: Sequence[TdoaMeasurement],
    scenario: Scenario,
    config: EkfConfig,
) -> TrackerState:
    """Sequential gated scalar updates; empty input returns the state unchanged."""
    x = np.array(state.x, dtype=float)
    P = np.array(state.P, dtype=float)
    r_var = config.tdoa_noise_sigma**2
    for m in measurements:
        ai = np.asarray(scenario.anchor_by_id(m.pair.i).position, dtype=float)
        aj = np.asarray(scenario.anchor_by_id(m.pair.j).position, dtype=float)
        x, P, flags = tdoa_update_arrays(
            x, P, float(m.value), ai, aj, r_var, config.gate_threshold
        )
        if flags["singular"]:
            raise SingularityError(
                f"state within {SINGULAR_DISTANCE} m of an anchor of pair {tuple(m.pair)}"
            )
        if flags["dead"]:
            raise FilterDivergenceError(
                f"non-finite innovation covariance on pair {tuple(m.pair)}",
                pair=m.pair,
            )
    return TrackerState(x=x, P=P, t=state.t)


def _grid_axes(scenario: Scenario, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    xmin, ymin, xmax, ymax = scenario.bounding_box()
    xs = np.arange(xmin, xmax + 1e-9, pitch)
    ys = np.arange(ymin, ymax + 1e-9, pitch)
    return xs, ys


def grid_residual_fields(
    frame: ToaFrame, pairs: Sequence[AnchorPair], scenario: Scenario, pitch: float
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Per-pair squared TDOA residual over the init grid.

    Returns (gx, gy, fields) with gx/gy the flattened node coordinates and
    fields one (G,) array per satisfiable pair, in input pair order.
    """
    xs, ys = _grid_axes(scenario, pitch)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()
    c = scenario.speed_of_light
    fields = []
    for m in form_tdoas(frame, pairs, c):
        ai = scenario.anchor_by_id(m.pair.i).position
        aj = scenario.anchor_by_id(m.pair.j).position
        di = np.hypot(gx - ai.x, gy - ai.y)
        dj = np.hypot(gx - aj.x, gy - aj.y)
        r = di - dj - m.value
        fields.append(r * r)
    return gx, gy, fields


def initialize(
    frames: Sequence[ToaFrame],
    pairs: Sequence[AnchorPair],
    scenario: Scenario,
    config: EkfConfig,
    pitch: float = INIT_GRID_PITCH,
) -> TrackerState:
    """Coarse-grid least-squares position from the first frame, zero velocity.

    Only the first frame is used even when more are supplied.
    """
    if len(frames) == 0:
        raise InvalidInputError("need at least one frame to initialize")
    frame = frames[0]
    gx, gy, fields = grid_residual_fields(frame, pairs, scenario, pitch)
    if not fields:
        raise InitializationError("no anchor pair satisfiable by the first frame")
    cost = np.zeros_like(gx)
    for f in fields:
        cost = cost + f
    if not np.any(np.isfinite(cost)):
        raise InitializationError("all grid residuals non-finite")
    best = int(np.argmin(cost))
    x = np.array([gx[best], gy[best], 0.0, 0.0])
    P = np.diag(
        [
            config.init_position_sigma**2,
            config.init_position_sigma**2,
            config.init_velocity_sigma**2,
            config.init_velocity_sigma**2,
        ]
    )
    return TrackerState(x=x, P=P, t=frame.t)


def run_fixed_pairs(
    scenario: Scenario,
    frames: Sequence[ToaFrame],
    pairs: Sequence[AnchorPair],
    config: EkfConfig,
    state: TrackerState | None = None,
) -> tuple[list[Fix], TrackerState]:
    """Plain EKF pass over frames with one fixed pair list.

    Initializes from the first frame unless a state is supplied; emits one
    fix per frame.
    """
    if len(frames) == 0:
        raise InvalidInputError("no frames to track")
    if state is None:
        state = initialize(frames, pairs, scenario, config)
    fixes: list[Fix] = []
    for frame in frames:
        dt = frame.t - state.t
        if dt < 0:
            raise InvalidInputError(f"frames not time-ordered at t={frame.t}")
        state = predict(state, dt, config)
        state = update(state, form_tdoas(frame, pairs, scenario.speed_of_light), scenario, config)
        fixes.append(fix_from_state(state))
    return fixes, state


# --------------------------------------------------------------------------
# batched candidate bank


def run_pair_sets(
    scenario: Scenario,
    frames: Sequence[ToaFrame],
    pair_sets: Sequence[Sequence[AnchorPair]],
    config: EkfConfig,
    chunk: int = 2048,
    pitch: float = INIT_GRID_PITCH,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one independent filter per pair set over the same frames.

    Every bank entry performs exactly the arithmetic of initialize() followed
    by per-frame predict()/update(), vectorized across sets. Sets may have
    different sizes; shorter sets are padded with inactive slots.

    Returns (positions, ok): positions has shape (n_sets, n_frames, 2) and
    ok marks sets that initialized and never hit a singular/divergent update.
    Positions of not-ok sets are frozen at their last healthy value.
    """
    if len(frames) == 0:
        raise InvalidInputError("no frames to track")
    n_sets = len(pair_sets)
    if n_sets == 0:
        return np.zeros((0, len(frames), 2)), np.zeros(0, dtype=bool)

    id2row = {a.id: r for r, a in enumerate(scenario.anchors)}
    axy = np.array([[a.position.x, a.position.y] for a in scenario.anchors])
    pair_list: list[AnchorPair] = []
    pair_index: dict[AnchorPair, int] = {}
    sets_idx = []
    k_max = max(len(ps) for ps in pair_sets)
    for ps in pair_sets:
        row = []
        for p in ps:
            if p not in pair_index:
                pair_index[p] = len(pair_list)
                pair_list.append(p)
            row.append(pair_index[p])
        row += [-1] * (k_max - len(row))  # inactive padding
        sets_idx.append(row)
    sets_idx = np.asarray(sets_idx, dtype=np.int64)
    pair_rows = np.array(
        [[id2row[p.i], id2row[p.j]] for p in pair_list], dtype=np.int64
    )

    c = scenario.speed_of_light

    def frame_values(frame: ToaFrame) -> tuple[np.ndarray, np.ndarray]:
        z = np.zeros(len(pair_list))
        avail = np.zeros(len(pair_list), dtype=bool)
        for idx, p in enumerate(pair_list):
            ti = frame.toas.get(p.i)
            tj = frame.toas.get(p.j)
            if ti is not None and tj is not None:
                z[idx] = c * (ti - tj)
                avail[idx] = True
        return z, avail

    # per-pair squared residual fields on the init grid, first frame
    xs, ys = _grid_axes(scenario, pitch)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()
    z0, avail0 = frame_values(frames[0])
    fields = np.zeros((len(pair_list), gx.size))
    for idx in range(len(pair_list)):
        if avail0[idx]:
            ai = axy[pair_rows[idx, 0]]
            aj = axy[pair_rows[idx, 1]]
            di = np.hypot(gx - ai[0], gy - ai[1])
            dj = np.hypot(gx - aj[0], gy - aj[1])
            r = di - dj - z0[idx]
            fields[idx] = r * r

    frame_cache = [frame_values(f) for f in frames]
    r_var = config.tdoa_noise_sigma**2
    gate = config.gate_threshold
    q = config.process_noise_accel_sigma**2
    p0 = np.diag(
        [
            config.init_position_sigma**2,
            config.init_position_sigma**2,
            config.init_velocity_sigma**2,
            config.init_velocity_sigma**2,
        ]
    )

    positions = np.zeros((n_sets, len(frames), 2))
    ok_all = np.zeros(n_sets, dtype=bool)
    for lo in range(0, n_sets, chunk):
        hi = min(lo + chunk, n_sets)
        idx = sets_idx[lo:hi]  # (B, k_max)
        B = hi - lo
        active = idx >= 0
        idx_safe = np.where(active, idx, 0)
        slot_avail = active & avail0[idx_safe]
        cost = np.zeros((B, gx.size))
        for m in range(k_max):
            rows = fields[idx_safe[:, m]]
            cost += np.where(slot_avail[:, m, None], rows, 0.0)
        ok = slot_avail.any(axis=1)
        best = np.argmin(cost, axis=1)
        x = np.zeros((B, 4))
        x[:, 0] = gx[best]
        x[:, 1] = gy[best]
        P = np.broadcast_to(p0, (B, 4, 4)).copy()
        alive = ok.copy()
        t_state = frames[0].t
        for fi, frame in enumerate(frames):
            dt = frame.t - t_state
            if dt < 0:
                raise InvalidInputError(f"frames not time-ordered at t={frame.t}")
            t_state = frame.t
            x, P = cv_predict_arrays(x, P, dt, q)
            z_all, avail = frame_cache[fi]
            for m in range(k_max):
                pr = idx_safe[:, m]
                use = active[:, m] & avail[pr] & alive
                if not use.any():
                    continue
                z = np.where(use, z_all[pr], 0.0)
                ai = axy[pair_rows[pr, 0]]
                aj = axy[pair_rows[pr, 1]]
                x_new, P_new, flags = tdoa_update_arrays(x, P, z, ai, aj, r_var, gate)
                alive = alive & ~(use & (flags["dead"] | flags["singular"]))
                use = use & alive
                x = np.where(use[:, None], x_new, x)
                P = np.where(use[:, None, None], P_new, P)
            positions[lo:hi, fi, 0] = x[:, 0]
            positions[lo:hi, fi, 1] = x[:, 1]
        ok_all[lo:hi] = alive
    return positions, ok_all


# --------------------------------------------------------------------------
# fix CSV: `t,x,y,vx,vy,p00,p11`

FIX_HEADER = ["t", "x", "y", "vx", "vy", "p00", "p11"]


def write_fixes_csv(fixes: Iterable[Fix], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(FIX_HEADER)
        for fx in fixes:
            w.writerow([repr(v) for v in fx])


def read_fixes_csv(path) -> list[Fix]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:7]] != FIX_HEADER:
            raise InvalidInputError(f"{path}: expected header {','.join(FIX_HEADER)}")
        for row in reader:
            if row:
                out.append(Fix(*(float(v) for v in row[:7])))
    return out

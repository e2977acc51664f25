"""Doorway detection on occupancy grids and synthetic-apartment generation.

The detector is purely geometric: a distance transform finds cells whose
clearance matches a door-sized opening, per-cell jamb pairs measure the
opening, and a local connectivity check keeps only pinch points whose
removal separates free space. Unknown cells count as occupied for
clearance but as free for connectivity.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, MapGenerationError, ScenarioFormatError
from .world import Door, Point

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

OCCUPIED = 0
UNKNOWN = 128
FREE = 255

DEFAULT_RESOLUTION = 0.05
DEFAULT_WIDTH_BAND = (0.5, 1.0)
DEFAULT_DOOR_WIDTH_RANGE = (0.6, 0.8)
_NMS_RADIUS = 0.5
_DISCONNECT_WINDOW = 1.0  # half-size of the 2 m check window, meters
_MIN_CLUSTER_CELLS = 2
_8CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    width: int
    height: int
    resolution: float
    origin: Point
    cells: np.ndarray  # (height, width) uint8 in {OCCUPIED, UNKNOWN, FREE}

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("grid must be at least 1x1")
        if self.resolution <= 0:
            raise InvalidInputError(f"resolution must be > 0, got {self.resolution}")
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.shape != (self.height, self.width):
            raise InvalidInputError(
                f"cells shape {cells.shape} != (height, width) = "
                f"({self.height}, {self.width})"
            )
        cells = cells.copy()
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", Point(*self.origin))

    def __eq__(self, other):
        return (
            isinstance(other, OccupancyGrid)
            and self.width == other.width
            and self.height == other.height
            and self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.cells, other.cells)
        )

    def cell_to_world(self, row: float, col: float) -> Point:
        """World coordinates of a cell center (fractional indices allowed)."""
        return Point(
            self.origin.x + (col + 0.5) * self.resolution,
            self.origin.y + (row + 0.5) * self.resolution,
        )


@dataclass(frozen=True)
class DoorDetection:
    door: Door
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score must be in [0, 1], got {self.score}")


# --------------------------------------------------------------------------
# synthetic apartment generator


def _split_rooms(rng, rect, min_cells, target):
    """BSP the interior rect into rooms; returns (rooms, splits) where each
    split is (orientation, line, lo, hi, parent_span) in cell coords."""
    rooms = [rect]
    splits = []
    while len(rooms) < target:
        splittable = []
        for i, (r0, c0, r1, c1) in enumerate(rooms):
            if (r1 - r0) >= 2 * min_cells + 2 or (c1 - c0) >= 2 * min_cells + 2:
                splittable.append(i)
        if not splittable:
            break
        i = int(rng.choice(splittable))
        r0, c0, r1, c1 = rooms.pop(i)
        if (r1 - r0) >= (c1 - c0):  # split horizontally (wall along columns)
            line = int(rng.integers(r0 + min_cells, r1 - min_cells - 1))
            rooms.insert(i, (r0, c0, line, c1))
            rooms.insert(i + 1, (line + 2, c0, r1, c1))
            splits.append(("h", line, c0, c1))
        else:
            line = int(rng.integers(c0 + min_cells, c1 - min_cells - 1))
            rooms.insert(i, (r0, c0, r1, line))
            rooms.insert(i + 1, (r0, line + 2, r1, c1))
            splits.append(("v", line, r0, r1))
    return rooms, splits


def generate_map(
    seed: int,
    room_count_range: tuple[int, int] = (3, 6),
    door_width_range: tuple[float, float] = DEFAULT_DOOR_WIDTH_RANGE,
    noise_level: float = 0.0,
    resolution: float = DEFAULT_RESOLUTION,
) -> tuple[OccupancyGrid, list[Door]]:
    """Random rectilinear apartment with at least two doorways.

    Walls are two cells thick; every internal wall gets one opening with a
    width drawn from ``door_width_range``. ``noise_level`` is the per-cell
    probability of salt-and-pepper corruption inside the building footprint.
    Deterministic for a given seed.
    """
    lo_rooms, hi_rooms = room_count_range
    if lo_rooms < 2 or hi_rooms < lo_rooms:
        raise InvalidInputError(f"bad room_count_range {room_count_range}")
    w_lo, w_hi = door_width_range
    if not 0.4 <= w_lo <= w_hi <= 1.2:
        raise InvalidInputError(f"bad door_width_range {door_width_range}")
    if not 0.0 <= noise_level < 1.0:
        raise InvalidInputError(f"bad noise_level {noise_level}")

    rng = np.random.default_rng(seed)
    target = int(rng.integers(max(3, lo_rooms), hi_rooms + 1))
    w_m = float(rng.uniform(9.0, 13.0))
    h_m = float(rng.uniform(7.0, 10.0))
    margin = 8  # unknown border, cells
    wall_t = 2
    min_room = int(round(2.2 / resolution))
    cols = int(round(w_m / resolution)) + 2 * (margin + wall_t)
    rows = int(round(h_m / resolution)) + 2 * (margin + wall_t)

    cells = np.full((rows, cols), UNKNOWN, dtype=np.uint8)
    b0 = margin  # building outer edge
    cells[b0 : rows - b0, b0 : cols - b0] = OCCUPIED
    i0 = b0 + wall_t  # interior
    cells[i0 : rows - i0 + 0, i0 : cols - i0 + 0] = FREE
    interior = (i0, i0, rows - i0, cols - i0)

    rooms, splits = _split_rooms(rng, interior, min_room, target)
    if len(splits) < 2:
        raise MapGenerationError(
            f"could not place at least two internal walls (seed {seed})"
        )

    doors: list[Door] = []
    for orientation, line, lo, hi in splits:
        width_m = float(rng.uniform(w_lo, w_hi))
        w_cells = max(2, int(round(width_m / resolution)))
        jamb = max(4, wall_t + 2)
        if hi - lo < w_cells + 2 * jamb:
            raise MapGenerationError(f"room span too small for a door (seed {seed})")
        start = int(rng.integers(lo + jamb, hi - jamb - w_cells + 1))
        if orientation == "h":
            cells[line : line + wall_t, lo:hi] = OCCUPIED
            cells[line : line + wall_t, start : start + w_cells] = FREE
            center_rc = (line + wall_t / 2.0 - 0.5, start + w_cells / 2.0 - 0.5)
            axis = Point(1.0, 0.0)
        else:
            cells[lo:hi, line : line + wall_t] = OCCUPIED
            cells[start : start + w_cells, line : line + wall_t] = FREE
            center_rc = (start + w_cells / 2.0 - 0.5, line + wall_t / 2.0 - 0.5)
            axis = Point(0.0, 1.0)
        cx = (center_rc[1] + 0.5) * resolution
        cy = (center_rc[0] + 0.5) * resolution
        doors.append(
            Door(len(doors) + 1, Point(cx, cy), axis, w_cells * resolution)
        )

    if noise_level > 0:
        footprint = np.zeros_like(cells, dtype=bool)
        footprint[b0 : rows - b0, b0 : cols - b0] = True
        flip = (rng.random(cells.shape) < noise_level) & footprint
        salt = rng.random(cells.shape) < 0.5
        noisy = np.where(salt, FREE, OCCUPIED).astype(np.uint8)
        cells = np.where(flip, noisy, cells)

    grid = OccupancyGrid(
        width=cols, height=rows, resolution=resolution, origin=Point(0.0, 0.0),
        cells=cells,
    )
    return grid, doors


# --------------------------------------------------------------------------
# detection


def _despeckle(cells: np.ndarray, min_blob: int = 5) -> np.ndarray:
    """Remove salt-and-pepper noise without eroding structure: occupied
    blobs smaller than min_blob become free, then free pinholes smaller
    than min_blob become occupied."""
    out = np.array(cells)
    for value, replacement in ((OCCUPIED, FREE), (FREE, OCCUPIED)):
        mask = out == value
        lab, n = ndimage.label(mask, structure=_8CONN)
        if n:
            counts = np.bincount(lab.ravel())
            small = counts < min_blob
            small[0] = False
            out[mask & small[lab]] = replacement
    return out


def _nearest_opposite(nonfree, r, c, u, radius):
    """Nearest non-free cell from (r, c) in the half-plane opposite to u."""
    rows, cols = nonfree.shape
    r0, r1 = max(0, r - radius), min(rows, r + radius + 1)
    c0, c1 = max(0, c - radius), min(cols, c + radius + 1)
    sub = nonfree[r0:r1, c0:c1]
    rr, cc = np.nonzero(sub)
    if rr.size == 0:
        return None
    dr = rr + r0 - r
    dc = cc + c0 - c
    opposite = dr * u[0] + dc * u[1] < 0
    if not opposite.any():
        return None
    d2 = dr * dr + dc * dc
    d2 = np.where(opposite, d2, np.iinfo(np.int64).max)
    k = int(np.argmin(d2))
    return rr[k] + r0, cc[k] + c0


def _passes_disconnect(free_conn, eroded, r, c, half_cells):
    """True when, inside the 2 m window around (r, c), the free space that
    (r, c) can reach touches at least two locally-separate eroded regions,
    i.e. the cell is a pinch between two wide areas."""
    rows, cols = free_conn.shape
    r0, r1 = max(0, r - half_cells), min(rows, r + half_cells + 1)
    c0, c1 = max(0, c - half_cells), min(cols, c + half_cells + 1)
    sub_free = free_conn[r0:r1, c0:c1]
    lab, _ = ndimage.label(sub_free, structure=_8CONN)
    mine = lab[r - r0, c - c0]
    if mine == 0:
        return False
    flood = lab == mine
    elab, n = ndimage.label(eroded[r0:r1, c0:c1], structure=_8CONN)
    if n < 2:
        return False
    touched = np.unique(elab[flood & (elab > 0)])
    return touched.size >= 2


def detect_doors(
    grid: OccupancyGrid,
    width_band: tuple[float, float] = DEFAULT_WIDTH_BAND,
    denoise: bool = True,
) -> list[DoorDetection]:
    """Find door-sized pinch points in the grid's free space.

    Candidate cells have a clearance radius in [width_band/2]. Each candidate
    measures its opening between the two nearest non-free cells on opposite
    sides; it passes when that opening is door-sized and removing the pinch
    locally disconnects free space (checked in a 2 m window against free
    space eroded by half the maximum width). Passing cells cluster into
    detections scored by the fraction of candidate cells that passed, then
    overlapping detections are suppressed.
    """
    lo, hi = width_band
    if not 0 < lo < hi:
        raise InvalidInputError(f"bad width_band {width_band}")
    res = grid.resolution
    cells = grid.cells
    if denoise:
        cells = _despeckle(cells)
    free_clear = cells == FREE
    free_conn = cells != OCCUPIED
    if not free_clear.any():
        return []

    edt, (jr, jc) = ndimage.distance_transform_edt(
        free_clear, return_indices=True
    )
    clear_m = edt * res
    cand = free_clear & (clear_m >= lo / 2.0) & (clear_m <= hi / 2.0)
    if not cand.any():
        return []

    # a pinch must bridge two locally-separate regions of free space eroded
    # by half the maximum door width
    eroded = free_conn & (clear_m > hi / 2.0)
    if not eroded.any():
        return []

    # cheap prescreen: the check window must contain eroded space at all
    half_cells = int(round(_DISCONNECT_WINDOW / res))
    win = 2 * half_cells + 1
    near_eroded = ndimage.maximum_filter(
        eroded.astype(np.uint8), size=win, mode="constant"
    )
    prescreen = cand & (near_eroded > 0)

    nonfree = ~free_clear
    width_slack = res

    pass_mask = np.zeros_like(cand)
    widths = np.full(cand.shape, np.nan)
    jamb_a = {}
    jamb_b = {}
    for r, c in zip(*np.nonzero(prescreen)):
        j1 = (jr[r, c], jc[r, c])
        u = (j1[0] - r, j1[1] - c)
        if u == (0, 0):
            continue
        # the far jamb can be at most the band maximum away
        radius = max(2, int(math.ceil((hi + 2 * width_slack) / res - edt[r, c])) + 1)
        j2 = _nearest_opposite(nonfree, r, c, u, radius)
        if j2 is None:
            continue
        # jambs must face each other across the cell; corner pockets between
        # perpendicular walls measure a diagonal, not an opening
        v = (j2[0] - r, j2[1] - c)
        cos_jambs = (u[0] * v[0] + u[1] * v[1]) / (
            math.hypot(*u) * math.hypot(*v)
        )
        if cos_jambs > -0.7:
            continue
        gap = math.hypot(j1[0] - j2[0], j1[1] - j2[1]) * res - res
        if not (lo - width_slack) <= gap <= (hi + width_slack):
            continue
        if not _passes_disconnect(free_conn, eroded, r, c, half_cells):
            continue
        pass_mask[r, c] = True
        widths[r, c] = gap
        jamb_a[(r, c)] = j1
        jamb_b[(r, c)] = j2

    if not pass_mask.any():
        return []
    pass_labels, n_pass = ndimage.label(pass_mask, structure=_8CONN)
    raw: list[tuple[float, Door]] = []
    for lbl in range(1, n_pass + 1):
        comp = np.argwhere(pass_labels == lbl)
        if comp.shape[0] < _MIN_CLUSTER_CELLS:
            continue
        # representative: the cell measuring the median opening
        comp_sorted = sorted(
            (widths[r, c], r, c) for r, c in comp
        )
        _, r, c = comp_sorted[len(comp_sorted) // 2]
        j1, j2 = jamb_a[(r, c)], jamb_b[(r, c)]
        p1 = grid.cell_to_world(*j1)
        p2 = grid.cell_to_world(*j2)
        center = Point((p1.x + p2.x) / 2.0, (p1.y + p2.y) / 2.0)
        axis = Point(p2.x - p1.x, p2.y - p1.y)
        width = axis.norm() - res
        if not 0.4 <= width <= 1.2:
            continue
        # score: passing fraction of the candidate cells near this throat
        cr, cc_ = int(round(comp[:, 0].mean())), int(round(comp[:, 1].mean()))
        r0, r1 = max(0, cr - half_cells), min(cand.shape[0], cr + half_cells + 1)
        c0, c1 = max(0, cc_ - half_cells), min(cand.shape[1], cc_ + half_cells + 1)
        denom = int(cand[r0:r1, c0:c1].sum())
        num = int(pass_mask[r0:r1, c0:c1].sum())
        score = num / denom if denom else 0.0
        raw.append((score, Door(0, center, axis, width)))

    # suppress overlaps, strongest first; deterministic order
    raw.sort(key=lambda sd: (-sd[0], sd[1].center.y, sd[1].center.x))
    kept: list[tuple[float, Door]] = []
    for score, door in raw:
        if all(
            (door.center - k.center).norm() >= _NMS_RADIUS for _, k in kept
        ):
            kept.append((score, door))
    return [
        DoorDetection(
            Door(idx + 1, d.center, d.axis, d.width), round(min(1.0, s), 6)
        )
        for idx, (s, d) in enumerate(kept)
    ]


# --------------------------------------------------------------------------
# detector evaluation


@dataclass(frozen=True)
class MatchReport:
    precision: float
    recall: float
    center_errors: tuple[float, ...]  # meters, one per matched door
    precision_defined: bool  # False when there were no detections


def match_detections(
    detections: list[DoorDetection],
    ground_truth: list[Door],
    tolerance: float = 0.3,
) -> MatchReport:
    """Greedy center-distance matching; precision defaults to 1 (flagged)
    when there is nothing detected."""
    if tolerance <= 0:
        raise InvalidInputError(f"tolerance must be > 0, got {tolerance}")
    pairs = []
    for di, det in enumerate(detections):
        for gi, gt in enumerate(ground_truth):
            d = (det.door.center - gt.center).norm()
            if d <= tolerance:
                pairs.append((d, di, gi))
    pairs.sort()
    used_d: set[int] = set()
    used_g: set[int] = set()
    errors: list[float] = []
    for d, di, gi in pairs:
        if di in used_d or gi in used_g:
            continue
        used_d.add(di)
        used_g.add(gi)
        errors.append(d)
    matched = len(errors)
    precision_defined = len(detections) > 0
    precision = matched / len(detections) if detections else 1.0
    recall = matched / len(ground_truth) if ground_truth else 1.0
    return MatchReport(
        precision=precision,
        recall=recall,
        center_errors=tuple(errors),
        precision_defined=precision_defined,
    )


# --------------------------------------------------------------------------
# grid file I/O: PGM (P2 or P5) plus a structured-text sidecar


def write_grid(grid: OccupancyGrid, path, binary: bool = True) -> None:
    path = str(path)
    header = f"P5\n{grid.width} {grid.height}\n255\n"
    if binary:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(grid.cells.tobytes())
    else:
        with open(path, "w", encoding="ascii") as f:
            f.write(f"P2\n{grid.width} {grid.height}\n255\n")
            for row in grid.cells:
                f.write(" ".join(str(int(v)) for v in row) + "\n")
    with open(path + ".meta", "w", encoding="utf-8") as f:
        f.write(
            "format = 1\n"
            f"resolution = {grid.resolution!r}\n"
            f"origin = [{grid.origin.x!r}, {grid.origin.y!r}]\n"
        )


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and comments
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise ScenarioFormatError(f"{path}: truncated PGM header")
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ScenarioFormatError(f"{path}: expected maxval 255, got {maxval}")
    if magic == b"P5":
        raster = data[pos + 1 : pos + 1 + w * h]
        if len(raster) != w * h:
            raise ScenarioFormatError(f"{path}: truncated P5 raster")
        return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    if magic == b"P2":
        values = data[pos:].split()
        if len(values) != w * h:
            raise ScenarioFormatError(f"{path}: expected {w * h} P2 samples")
        return np.array([int(v) for v in values], dtype=np.uint8).reshape(h, w)
    raise ScenarioFormatError(f"{path}: unsupported magic {magic!r}")


def read_grid(path) -> OccupancyGrid:
    path = str(path)
    raw = _read_pgm(path)
    # tolerate off-palette values from external tools
    cells = np.full(raw.shape, UNKNOWN, dtype=np.uint8)
    cells[raw < 64] = OCCUPIED
    cells[raw >= 192] = FREE
    resolution = DEFAULT_RESOLUTION
    origin = Point(0.0, 0.0)
    try:
        with open(path + ".meta", "rb") as f:
            meta = _toml.load(f)
        resolution = float(meta.get("resolution", resolution))
        o = meta.get("origin", [0.0, 0.0])
        origin = Point(float(o[0]), float(o[1]))
    except FileNotFoundError:
        pass
    return OccupancyGrid(
        width=raw.shape[1],
        height=raw.shape[0],
        resolution=resolution,
        origin=origin,
        cells=cells,
    )


def doors_to_toml(doors: list[Door], scores: list[float] | None = None) -> str:
    """Door list as scenario `[[doors]]` sections, mergeable into a scenario file."""
    lines = []
    for idx, d in enumerate(doors):
        if scores is not None:
            lines.append(f"# score = {scores[idx]!r}")
        lines += [
            "[[doors]]",
            f"id = {d.id}",
            f"center = [{d.center.x!r}, {d.center.y!r}]",
            f"axis = [{d.axis.x!r}, {d.axis.y!r}]",
            f"width = {d.width!r}",
            "",
        ]
    return "\n".join(lines)

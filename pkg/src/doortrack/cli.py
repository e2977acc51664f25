"""Batch command-line pipeline: generate maps, detect doors, simulate
sessions, calibrate pair tables, track, and evaluate.

Exit codes: 0 success, 1 usage error, 2 bad or missing data, 3 numerical
failure. All randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from . import __version__
from .calibration import (
    DEFAULT_CANDIDATE_SIZES,
    DEFAULT_REF_POINT_COUNT,
    DEFAULT_WINDOW_HALF_WIDTH,
    EVAL_BAND,
    extract_transitions,
    parse_pair_table,
    select_pairs,
    write_cost_report_csv,
    write_pair_table,
)
from .doorfind import detect_doors, doors_to_toml, generate_map, read_grid, write_grid
from .errors import (
    CalibrationError,
    DoortrackError,
    FilterDivergenceError,
    InitializationError,
    InvalidInputError,
    MapGenerationError,
    ScenarioFormatError,
    SingularityError,
    ZeroEvidenceError,
)
from .evalkit import compare, trajectory_error, write_ecdf_csv, write_summary_csv
from .runtime import read_labeled_fixes_csv, track_session, write_labeled_fixes_csv
from .simkit import (
    BodyShadowModel,
    SimConfig,
    read_toa_csv,
    simulate_session,
    waypoint_trajectory,
    write_toa_csv,
)
from .tracking import EkfConfig, all_pairs, read_fixes_csv
from .world import load_scenario

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

log = logging.getLogger("doortrack")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (
    ScenarioFormatError,
    InvalidInputError,
    MapGenerationError,
    ZeroEvidenceError,
    CalibrationError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
)
_NUMERIC_ERRORS = (FilterDivergenceError, InitializationError, SingularityError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_overrides(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as f:
        return _toml.load(f)


def _ekf_config(overrides: dict) -> EkfConfig:
    return EkfConfig(**overrides.get("ekf", {}))


def _sim_config(overrides: dict, seed: int) -> SimConfig:
    sim = dict(overrides.get("sim", {}))
    shadow = BodyShadowModel(**sim.pop("shadow", {}))
    return SimConfig(shadow=shadow, rng_seed=seed, **sim)


def _read_waypoints(path) -> list[tuple[float, float]]:
    pts = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise InvalidInputError(f"{path}: empty waypoint file")
        cols = [h.strip() for h in header]
        if "x" not in cols or "y" not in cols:
            raise InvalidInputError(f"{path}: waypoint CSV needs x,y columns")
        xi, yi = cols.index("x"), cols.index("y")
        for row in reader:
            if row:
                pts.append((float(row[xi]), float(row[yi])))
    if len(pts) < 2:
        raise InvalidInputError(f"{path}: need at least 2 waypoints")
    return pts


def _parse_inline_path(text: str) -> list[tuple[float, float]]:
    pts = []
    for tok in text.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        x, y = tok.split(",")
        pts.append((float(x), float(y)))
    if len(pts) < 2:
        raise InvalidInputError("inline path needs at least 2 waypoints 'x,y;x,y;...'")
    return pts


def _write_reference_csv(poses, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "x", "y", "heading"])
        for p in poses:
            w.writerow([repr(p.t), repr(p.position.x), repr(p.position.y), repr(p.heading)])


def _read_reference(path) -> list[tuple[float, float]]:
    """Reference polyline from either a truth-pose CSV (t,x,y,...) or a
    waypoint CSV (x,y)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise InvalidInputError(f"{path}: empty reference file")
        cols = [h.strip() for h in header]
        if "x" not in cols or "y" not in cols:
            raise InvalidInputError(f"{path}: reference CSV needs x,y columns")
        xi, yi = cols.index("x"), cols.index("y")
        pts = [(float(r[xi]), float(r[yi])) for r in reader if r]
    if len(pts) < 2:
        raise InvalidInputError(f"{path}: need at least 2 reference points")
    return pts


def _read_fix_positions(path) -> list[tuple[float, float]]:
    try:
        fixes = read_labeled_fixes_csv(path)
    except InvalidInputError:
        fixes = read_fixes_csv(path)
    return [(f.x, f.y) for f in fixes]


# --------------------------------------------------------------------------
# commands


def cmd_genmap(args, overrides) -> int:
    grid, doors = generate_map(
        seed=args.seed,
        room_count_range=tuple(args.rooms),
        door_width_range=tuple(args.door_width),
        noise_level=args.noise,
    )
    write_grid(grid, args.out, binary=not args.ascii)
    log.info("wrote %s (%dx%d cells, %d doors)", args.out, grid.width, grid.height, len(doors))
    if args.truth:
        with open(args.truth, "w", encoding="utf-8") as f:
            f.write(doors_to_toml(doors))
        log.info("wrote ground truth doors to %s", args.truth)
    return EXIT_OK


def cmd_detect(args, overrides) -> int:
    grid = read_grid(args.grid)
    detections = detect_doors(grid, width_band=tuple(args.band))
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(doors_to_toml([d.door for d in detections], [d.score for d in detections]))
    log.info("detected %d doorways -> %s", len(detections), args.out)
    return EXIT_OK


def cmd_simulate(args, overrides) -> int:
    scenario = load_scenario(args.scenario)
    if args.waypoints:
        wps = _read_waypoints(args.waypoints)
    else:
        wps = _parse_inline_path(args.path)
    if args.duration is not None:
        # ping-pong the route until the requested duration is covered
        length = sum(
            ((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2) ** 0.5
            for a, b in zip(wps[:-1], wps[1:])
        )
        needed = max(1, int(args.duration * args.speed / length) + 1)
        walk = list(wps)
        forward = False
        for _ in range(needed - 1):
            walk.extend(wps[:-1][::-1] if not forward else wps[1:])
            forward = not forward
    else:
        walk = wps
    trajectory = waypoint_trajectory(walk, speed=args.speed, dt=args.dt)
    if args.duration is not None:
        trajectory = [p for p in trajectory if p.t <= args.duration]
    config = _sim_config(overrides, args.seed)
    frames = simulate_session(scenario, config, trajectory)
    write_toa_csv(frames, args.out)
    log.info("simulated %d frames (%.0f s) -> %s", len(frames), trajectory[-1].t, args.out)
    if args.truth_out:
        _write_reference_csv(trajectory, args.truth_out)
        log.info("wrote ground-truth poses to %s", args.truth_out)
    return EXIT_OK


def cmd_calibrate(args, overrides) -> int:
    scenario = load_scenario(args.scenario)
    frames = read_toa_csv(args.toa)
    ekf = _ekf_config(overrides)
    cal = overrides.get("calibration", {})
    windows = extract_transitions(
        scenario,
        frames,
        all_pairs(scenario.anchor_ids()),
        window_half_width=cal.get("window_half_width", args.window_half_width),
    )
    log.info("extracted %d transition windows", len(windows))
    table, report = select_pairs(
        scenario,
        windows,
        candidate_sizes=args.sizes,
        ekf_config=ekf,
        ref_point_count=cal.get("ref_point_count", args.refs),
        band=cal.get("band", EVAL_BAND),
        workers=args.workers,
        method=args.method,
    )
    write_pair_table(table, args.out_pairs)
    log.info("calibrated %d keys -> %s", len(table.entries), args.out_pairs)
    if args.out_cost:
        write_cost_report_csv(report, args.out_cost, top=args.top)
        log.info("wrote cost report -> %s", args.out_cost)
    return EXIT_OK


def cmd_track(args, overrides) -> int:
    scenario = load_scenario(args.scenario)
    frames = read_toa_csv(args.toa)
    table = parse_pair_table(args.pairs)
    ekf = _ekf_config(overrides)
    rt = overrides.get("runtime", {})
    fixes, _ = track_session(
        scenario,
        frames,
        table,
        ekf_config=ekf,
        speed_floor=rt.get("speed_floor", 0.15),
        hysteresis_epochs=rt.get("hysteresis_epochs", 3),
    )
    write_labeled_fixes_csv(fixes, args.out)
    log.info("tracked %d fixes -> %s", len(fixes), args.out)
    return EXIT_OK


def cmd_evaluate(args, overrides) -> int:
    fixes = _read_fix_positions(args.fixes)
    reference = _read_reference(args.reference)
    summary = trajectory_error(fixes, reference)
    rows = [(args.label, summary)]
    log.info(
        "%s: median %.3f m, mean %.3f m, p90 %.3f m over %d fixes",
        args.label, summary.median, summary.mean, summary.p90, len(summary.samples),
    )
    if args.out_ecdf:
        write_ecdf_csv(summary.samples, args.out_ecdf)
    if args.baseline_fixes:
        base = trajectory_error(_read_fix_positions(args.baseline_fixes), reference)
        rows.append(("baseline", base))
        gain = compare(summary, base)
        log.info(
            "improvement over baseline: median %+.3f m, mean %+.3f m",
            gain.median_improvement_m, gain.mean_improvement_m,
        )
        if args.baseline_ecdf:
            write_ecdf_csv(base.samples, args.baseline_ecdf)
    write_summary_csv(rows, args.out_summary)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="doortrack", description=__doc__)
    p.add_argument("--version", action="version", version=f"doortrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="master RNG seed")
        sp.add_argument("--config", help="TOML file with ekf/sim/calibration/runtime overrides")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    sp = sub.add_parser("genmap", help="generate a synthetic occupancy-grid apartment")
    common(sp)
    sp.add_argument("--out", required=True, help="output PGM path (sidecar .meta written too)")
    sp.add_argument("--truth", help="write ground-truth doors as a TOML doors section")
    sp.add_argument("--rooms", nargs=2, type=int, default=[3, 6], metavar=("MIN", "MAX"))
    sp.add_argument("--door-width", nargs=2, type=float, default=[0.6, 0.8], metavar=("LO", "HI"))
    sp.add_argument("--noise", type=float, default=0.02, help="salt-and-pepper cell probability")
    sp.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    sp.set_defaults(func=cmd_genmap)

    sp = sub.add_parser("detect", help="detect doorways on an occupancy grid")
    common(sp)
    sp.add_argument("--grid", required=True, help="input PGM path")
    sp.add_argument("--out", required=True, help="output TOML doors section")
    sp.add_argument("--band", nargs=2, type=float, default=[0.5, 1.0], metavar=("LO", "HI"))
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("simulate", help="simulate a walking session's TOA log")
    common(sp)
    sp.add_argument("--scenario", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--waypoints", help="CSV with x,y columns")
    src.add_argument("--path", help="inline 'x,y;x,y;...' waypoints")
    sp.add_argument("--duration", type=float, help="seconds; route is ping-ponged to fill")
    sp.add_argument("--speed", type=float, default=1.0, help="walking speed m/s")
    sp.add_argument("--dt", type=float, default=0.1, help="epoch period s")
    sp.add_argument("--out", required=True, help="output TOA CSV")
    sp.add_argument("--truth-out", help="write ground-truth poses CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="select per-zone per-heading pair sets")
    common(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--toa", required=True, help="historical TOA CSV")
    sp.add_argument("--out-pairs", required=True, help="output pair table")
    sp.add_argument("--out-cost", help="output cost report CSV")
    sp.add_argument("--sizes", nargs="+", type=int, default=list(DEFAULT_CANDIDATE_SIZES))
    sp.add_argument("--refs", type=int, default=DEFAULT_REF_POINT_COUNT)
    sp.add_argument("--window-half-width", type=float, default=DEFAULT_WINDOW_HALF_WIDTH)
    sp.add_argument("--workers", type=int, default=1, help="candidate evaluation processes")
    sp.add_argument("--method", choices=["exhaustive", "greedy"], default="exhaustive")
    sp.add_argument("--top", type=int, help="cost report rows per key (default: all)")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("track", help="run the adaptive tracking loop over a TOA log")
    common(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--toa", required=True)
    sp.add_argument("--pairs", required=True, help="pair table file")
    sp.add_argument("--out", required=True, help="output fixes CSV")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="trajectory error summary and ECDF")
    common(sp)
    sp.add_argument("--fixes", required=True, help="fixes CSV (plain or labeled)")
    sp.add_argument("--reference", required=True, help="truth poses CSV or waypoints CSV")
    sp.add_argument("--out-summary", required=True)
    sp.add_argument("--out-ecdf")
    sp.add_argument("--label", default="run")
    sp.add_argument("--baseline-fixes", help="second fixes CSV to compare against")
    sp.add_argument("--baseline-ecdf", help="ECDF CSV for the baseline run")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = _load_overrides(args.config)
        return args.func(args, overrides)
    except _NUMERIC_ERRORS as exc:
        print(f"doortrack: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"doortrack: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

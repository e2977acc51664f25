import numpy as np
import pytest

from doortrack.doorfind import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    DoorDetection,
    OccupancyGrid,
    detect_doors,
    doors_to_toml,
    generate_map,
    match_detections,
    read_grid,
    write_grid,
)
from doortrack.errors import InvalidInputError, MapGenerationError, ScenarioFormatError
from doortrack.world import Door, Point


def room_pair_grid(gap_m=0.7, res=0.05, rooms_m=4.0, wall_t=2):
    """Two square rooms separated by a straight vertical wall with one gap."""
    room = int(rooms_m / res)
    h = room + 2 * wall_t
    w = 2 * room + 3 * wall_t
    cells = np.full((h, w), OCCUPIED, dtype=np.uint8)
    cells[wall_t : wall_t + room, wall_t : wall_t + room] = FREE
    cells[wall_t : wall_t + room, 2 * wall_t + room : 2 * wall_t + 2 * room] = FREE
    gap = int(round(gap_m / res))
    gr0 = wall_t + room // 2 - gap // 2
    cells[gr0 : gr0 + gap, wall_t + room : wall_t + room + wall_t] = FREE
    grid = OccupancyGrid(width=w, height=h, resolution=res, origin=Point(0, 0), cells=cells)
    center = grid.cell_to_world(gr0 + gap / 2.0 - 0.5, wall_t + room + wall_t / 2.0 - 0.5)
    return grid, center


class TestGenerateMap:
    def test_at_least_two_doors(self):
        for seed in range(8):
            _, doors = generate_map(seed=seed)
            assert len(doors) >= 2

    def test_noiseless_door_openings_free(self):
        grid, doors = generate_map(seed=4, noise_level=0.0)
        for d in doors:
            for frac in (-0.4, 0.0, 0.4):
                p = Point(
                    d.center.x + frac * d.width * d.axis.x,
                    d.center.y + frac * d.width * d.axis.y,
                )
                col = int(p.x / grid.resolution)
                row = int(p.y / grid.resolution)
                assert grid.cells[row, col] == FREE

    def test_deterministic(self):
        g1, d1 = generate_map(seed=12, noise_level=0.05)
        g2, d2 = generate_map(seed=12, noise_level=0.05)
        assert g1 == g2
        assert d1 == d2

    def test_seeds_differ(self):
        g1, _ = generate_map(seed=1)
        g2, _ = generate_map(seed=2)
        assert g1 != g2

    def test_width_range_respected(self):
        _, doors = generate_map(seed=9, door_width_range=(0.6, 0.8))
        for d in doors:
            assert 0.6 - 0.051 <= d.width <= 0.8 + 0.051

    def test_bad_args_rejected(self):
        with pytest.raises(InvalidInputError):
            generate_map(seed=0, room_count_range=(1, 0))
        with pytest.raises(InvalidInputError):
            generate_map(seed=0, noise_level=1.5)


class TestDetectDoors:
    def test_single_gap_detected(self):
        grid, center = room_pair_grid(gap_m=0.7)
        dets = detect_doors(grid)
        assert len(dets) == 1
        d = dets[0].door
        assert (d.center - center).norm() <= 2 * grid.resolution
        assert abs(d.width - 0.7) <= 0.1
        # opening is vertical: axis along y
        assert abs(d.axis.y) > 0.95

    def test_solid_wall_nothing(self):
        grid, _ = room_pair_grid()
        cells = np.array(grid.cells)
        cells[:, :] = np.where(cells == FREE, FREE, OCCUPIED)
        # fill the gap back in
        mid = grid.width // 2
        cells[:, mid - 2 : mid + 3] = OCCUPIED
        solid = OccupancyGrid(
            width=grid.width, height=grid.height, resolution=grid.resolution,
            origin=grid.origin, cells=cells,
        )
        assert detect_doors(solid) == []

    def test_furniture_gap_detected(self):
        # table edge 0.75 m from a wall forms a doorway-like passage
        res = 0.05
        h, w = 120, 120
        cells = np.full((h, w), FREE, dtype=np.uint8)
        cells[:2, :] = OCCUPIED   # wall along the bottom
        cells[-2:, :] = OCCUPIED
        cells[:, :2] = OCCUPIED
        cells[:, -2:] = OCCUPIED
        # a 1 m table whose lower edge sits 0.75 m above the wall
        t0 = 2 + int(0.75 / res)
        cells[t0 : t0 + 20, 44:64] = OCCUPIED
        grid = OccupancyGrid(width=w, height=h, resolution=res, origin=Point(0, 0), cells=cells)
        dets = detect_doors(grid)
        assert len(dets) >= 1
        best = dets[0].door
        assert 0.55 <= best.width <= 0.95
        # passage runs between wall (y=0.1) and table bottom
        assert 0.1 < best.center.y < 0.95

    def test_detection_centers_are_free_cells(self):
        grid, _ = generate_map(seed=6, noise_level=0.02)
        for det in detect_doors(grid):
            col = int(det.door.center.x / grid.resolution)
            row = int(det.door.center.y / grid.resolution)
            assert grid.cells[row, col] != OCCUPIED

    def test_translation_invariance(self):
        grid, _ = room_pair_grid()
        moved = OccupancyGrid(
            width=grid.width, height=grid.height, resolution=grid.resolution,
            origin=Point(3.0, -2.0), cells=np.array(grid.cells),
        )
        d0 = detect_doors(grid)[0].door
        d1 = detect_doors(moved)[0].door
        assert d1.center.x == pytest.approx(d0.center.x + 3.0, abs=1e-9)
        assert d1.center.y == pytest.approx(d0.center.y - 2.0, abs=1e-9)
        assert d1.width == pytest.approx(d0.width, abs=1e-9)

    def test_rotation_invariance(self):
        grid, _ = room_pair_grid()
        k = 1  # 90 degrees counterclockwise in array space
        rot = np.ascontiguousarray(np.rot90(np.array(grid.cells), k))
        rgrid = OccupancyGrid(
            width=rot.shape[1], height=rot.shape[0], resolution=grid.resolution,
            origin=Point(0, 0), cells=rot,
        )
        d0 = detect_doors(grid)[0].door
        d1 = detect_doors(rgrid)[0].door
        # rot90 maps cell (r, c) -> (W-1-c, r): world (x, y) -> (y, W_m - x)
        wm = grid.width * grid.resolution
        assert d1.center.x == pytest.approx(d0.center.y, abs=2 * grid.resolution)
        assert d1.center.y == pytest.approx(wm - d0.center.x, abs=2 * grid.resolution)
        assert d1.width == pytest.approx(d0.width, abs=2 * grid.resolution)
        # vertical opening becomes horizontal
        assert abs(d1.axis.x) > 0.95

    def test_quality_on_generated_maps(self):
        precisions, recalls, errors = [], [], []
        for seed in range(20):
            grid, truth = generate_map(seed=seed, noise_level=0.02)
            report = match_detections(detect_doors(grid), truth)
            precisions.append(report.precision)
            recalls.append(report.recall)
            errors.extend(report.center_errors)
        assert np.mean(recalls) >= 0.9
        assert np.mean(precisions) >= 0.8
        assert np.median(errors) <= 2 * 0.05


class TestMatchDetections:
    def det(self, x, y, w=0.7):
        return DoorDetection(Door(1, Point(x, y), Point(1, 0), w), 0.9)

    def gt(self, x, y, w=0.7):
        return Door(1, Point(x, y), Point(1, 0), w)

    def test_perfect_match(self):
        dets = [self.det(1, 1), self.det(3, 1)]
        gts = [self.gt(1, 1), self.gt(3, 1)]
        r = match_detections(dets, gts)
        assert r.precision == 1.0 and r.recall == 1.0
        assert r.center_errors == (0.0, 0.0)

    def test_no_detections_convention(self):
        r = match_detections([], [self.gt(1, 1)])
        assert r.recall == 0.0
        assert r.precision == 1.0
        assert not r.precision_defined

    def test_half_found(self):
        r = match_detections([self.det(1, 1)], [self.gt(1, 1), self.gt(5, 5)])
        assert r.recall == 0.5
        assert r.precision == 1.0

    def test_tolerance(self):
        r = match_detections([self.det(1.4, 1)], [self.gt(1, 1)], tolerance=0.3)
        assert r.recall == 0.0
        with pytest.raises(InvalidInputError):
            match_detections([], [], tolerance=0.0)


class TestGridIo:
    def test_p5_round_trip(self, tmp_path):
        grid, _ = generate_map(seed=2, noise_level=0.01)
        path = tmp_path / "map.pgm"
        write_grid(grid, path, binary=True)
        assert read_grid(path) == grid

    def test_p2_round_trip(self, tmp_path):
        grid, _ = room_pair_grid()
        path = tmp_path / "map.pgm"
        write_grid(grid, path, binary=False)
        assert read_grid(path) == grid

    def test_missing_sidecar_defaults(self, tmp_path):
        grid, _ = room_pair_grid()
        path = tmp_path / "map.pgm"
        write_grid(grid, path)
        (tmp_path / "map.pgm.meta").unlink()
        loaded = read_grid(path)
        assert loaded.resolution == 0.05
        assert loaded.origin == Point(0.0, 0.0)

    def test_truncated_pgm_rejected(self, tmp_path):
        path = tmp_path / "map.pgm"
        path.write_bytes(b"P5\n10 10\n255\nshort")
        with pytest.raises(ScenarioFormatError):
            read_grid(path)

    def test_doors_to_toml_is_loadable_section(self, tmp_path):
        doors = [Door(1, Point(1.0, 2.0), Point(1, 0), 0.7)]
        text = "format = 1\n" + doors_to_toml(doors, scores=[0.5])
        import sys
        if sys.version_info >= (3, 11):
            import tomllib as toml
        else:
            import tomli as toml
        data = toml.loads(text)
        assert data["doors"][0]["width"] == 0.7


class TestOccupancyGridType:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            OccupancyGrid(width=0, height=1, resolution=0.05, origin=Point(0, 0),
                          cells=np.zeros((1, 0), np.uint8))
        with pytest.raises(InvalidInputError):
            OccupancyGrid(width=2, height=2, resolution=-1.0, origin=Point(0, 0),
                          cells=np.zeros((2, 2), np.uint8))
        with pytest.raises(InvalidInputError):
            OccupancyGrid(width=3, height=2, resolution=0.05, origin=Point(0, 0),
                          cells=np.zeros((2, 2), np.uint8))

    def test_detection_score_range(self):
        with pytest.raises(InvalidInputError):
            DoorDetection(Door(1, Point(0, 0), Point(1, 0), 0.7), 1.5)

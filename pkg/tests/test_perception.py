import json
import math

import numpy as np
import pytest

import oracles
from skelnav.errors import InputError
from skelnav.perception import (CameraIntrinsics, DepthFrame, OccupancyGrid,
                                PerceptionConfig, backproject, gaussian_sigma,
                                extract_navigable_region, read_depth_frame,
                                refine_region, write_depth_frame)


def test_intrinsics_pinhole_values():
    intr = CameraIntrinsics(width=256, height=512, horizontal_fov_deg=90.0)
    assert intr.fx == pytest.approx(128.0)
    assert intr.fy == intr.fx
    assert intr.cx == 127.5
    assert intr.cy == 255.5


def test_gaussian_sigma_convention():
    assert gaussian_sigma(75) == pytest.approx(11.6)
    assert gaussian_sigma(3) == pytest.approx(0.8)


def test_config_validation():
    with pytest.raises(InputError):
        PerceptionConfig(smoothing_kernel=4)
    with pytest.raises(InputError):
        PerceptionConfig(radius=-1.0)
    with pytest.raises(InputError):
        PerceptionConfig(cell_size=0.0)
    assert PerceptionConfig(radius=2.0, cell_size=0.1).grid_cells == 40


def test_backproject_center_pixel_and_heading():
    # 3x3 sensor puts the principal point exactly on pixel (1, 1), so that
    # pixel is a pure forward ray; rotating the frame swings it to +y
    intr = CameraIntrinsics(width=3, height=3, horizontal_fov_deg=90.0)
    d = np.zeros((3, 3), dtype=np.float32)
    d[1, 1] = 1.5
    p0 = backproject(DepthFrame(d, 0.0), intr)
    p90 = backproject(DepthFrame(d, 90.0), intr)
    assert p0.shape == (1, 3)
    assert p0[0] == pytest.approx([1.5, 0.0, 0.0])
    assert p90[0] == pytest.approx([0.0, 1.5, 0.0])


def test_backproject_off_axis_pixel():
    intr = CameraIntrinsics(width=3, height=3, horizontal_fov_deg=90.0)
    d = np.zeros((3, 3), dtype=np.float32)
    d[2, 0] = 2.0        # bottom-left pixel: left of centre, below horizon
    (x, y, z), = backproject(DepthFrame(d, 0.0), intr)
    assert x == pytest.approx(2.0)                      # depth is along the axis
    assert y == pytest.approx(2.0 / intr.fx)            # one pixel left of cx
    assert z == pytest.approx(-2.0 / intr.fy)           # one pixel below cy
    # the lateral angle of the ray matches the pixel geometry
    assert math.degrees(math.atan2(y, x)) == pytest.approx(
        math.degrees(math.atan(1.0 / intr.fx)))


def test_backproject_drops_no_return_pixels():
    intr = CameraIntrinsics(width=3, height=2, horizontal_fov_deg=90.0)
    d = np.array([[0.0, -1.0, np.nan],
                  [np.inf, 1.0, 0.0]], dtype=np.float32)
    pts = backproject(DepthFrame(d, 0.0), intr)
    assert pts.shape == (1, 3)


def test_backproject_shape_mismatch():
    intr = CameraIntrinsics(width=4, height=4)
    with pytest.raises(InputError):
        backproject(DepthFrame(np.zeros((3, 3), np.float32), 0.0), intr)


def test_extract_strict_threshold_and_radius():
    cfg = PerceptionConfig(radius=2.0, cell_size=0.1)
    pts = np.array([
        [0.5, 0.0, -1.25],   # floor: kept
        [0.5, 0.1, -1.0],    # exactly at the height threshold: rejected
        [2.0, 0.0, -1.25],   # exactly at the radius: rejected
        [0.0, 1.99, -1.2],   # just inside: kept
        [0.5, 0.0, -0.2],    # table height: rejected
    ])
    grid = extract_navigable_region(pts, cfg)
    assert int(grid.cells.sum()) == 2


def test_extract_cell_indexing():
    cfg = PerceptionConfig(radius=0.1, cell_size=0.02)
    grid = extract_navigable_region(np.array([[0.03, 0.01, -1.3]]), cfg)
    assert grid.cells.shape == (10, 10)
    assert grid.agent_cell == (5, 5)
    assert grid.cells[6, 5]
    assert int(grid.cells.sum()) == 1


def test_cell_center():
    cfg = PerceptionConfig(radius=1.0, cell_size=0.25)
    g = extract_navigable_region(np.empty((0, 3)), cfg)
    x, y = g.cell_center(4, 4)
    assert x == pytest.approx(0.125)
    assert y == pytest.approx(0.125)


def test_refine_fills_holes_and_keeps_largest_component():
    cfg = PerceptionConfig(radius=3.0, cell_size=0.02, smoothing_kernel=5)
    n = cfg.grid_cells
    cells = np.zeros((n, n), dtype=bool)
    cells[100:200, 100:200] = True
    cells[140:160, 140:160] = False   # enclosed hole
    cells[20:30, 20:30] = True        # smaller separate blob
    grid = OccupancyGrid(cells, cfg.cell_size, (-3.0, -3.0))
    out = refine_region(grid, cfg)
    assert out.cells[150, 150]
    assert not out.cells[25, 25]
    assert oracles.count_components(out.cells) == 1


def test_refine_empty_stays_empty():
    cfg = PerceptionConfig()
    n = cfg.grid_cells
    grid = OccupancyGrid(np.zeros((n, n), dtype=bool), cfg.cell_size,
                         (-cfg.radius, -cfg.radius))
    assert not refine_region(grid, cfg).cells.any()


def test_depth_frame_io(tmp_path):
    rng = np.random.default_rng(0)
    d = rng.uniform(0.0, 9.0, size=(4, 6)).astype(np.float32)
    d[0, 0] = 0.0
    p = tmp_path / "frame.bin"
    write_depth_frame(p, DepthFrame(depth=d, heading_deg=-30.0))
    back = read_depth_frame(p)
    assert back.heading_deg == -30.0
    assert back.depth.dtype == np.float32
    assert np.array_equal(back.depth, d)
    header = json.loads(p.read_bytes().split(b"\n", 1)[0])
    assert header == {"width": 6, "height": 4, "heading_deg": -30.0}


def test_depth_frame_truncated_payload(tmp_path):
    p = tmp_path / "bad.bin"
    write_depth_frame(p, DepthFrame(np.ones((2, 2), np.float32), 0.0))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(InputError):
        read_depth_frame(p)

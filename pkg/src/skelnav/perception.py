"""Depth perception: panoramic depth frames -> egocentric occupancy grid.

Frame conventions, pinned once and used everywhere:

* image frame: u right, v down, origin top-left; depth is the distance
  along the optical axis (not the ray length), float32 metres, 0.0 means
  "no return" and is dropped.
* camera frame: x right, y down, z forward (pinhole).
* agent frame: x forward, y left, z up; z is measured relative to the
  camera, so the floor sits at -camera_height.
* grid frame: row indexes x, col indexes y, origin at (-radius, -radius),
  the agent occupies ``agent_cell = (n // 2, n // 2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InputError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model with square pixels.

    ``fx`` is derived from the horizontal field of view, ``fy`` equals
    ``fx``, and the principal point sits at the pixel-grid centre
    ``((w-1)/2, (h-1)/2)``.
    """

    # default sensor: 90 deg horizontal FOV and a tall image (square
    # pixels, ~127 deg vertical). The tall aspect keeps the floor blind
    # disk around the agent under 0.65 m; narrower vertical coverage
    # disconnects the visible floor when the agent stands near a wall in
    # a tight corridor, and the navigable region then loses whole branches
    width: int = 256
    height: int = 512
    horizontal_fov_deg: float = 90.0
    camera_height: float = 1.25

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.horizontal_fov_deg) / 2.0)

    @property
    def fy(self) -> float:
        return self.fx

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0


@dataclass
class DepthFrame:
    """One depth image plus the agent-relative heading it was taken at."""

    depth: np.ndarray  # (H, W) float32, metres along the optical axis
    heading_deg: float = 0.0


@dataclass
class Observation:
    """A panoramic observation: several depth frames at known headings,
    optionally paired with RGB frames of the same headings."""

    frames: list[DepthFrame]
    rgb: list[np.ndarray] | None = None

    @property
    def headings(self) -> list[float]:
        return [f.heading_deg for f in self.frames]


@dataclass(frozen=True)
class PerceptionConfig:
    height_threshold: float = -1.0   # keep points with z strictly below this
    radius: float = 5.0              # keep points with hypot(x, y) strictly below this
    cell_size: float = 0.02
    smoothing_kernel: int = 75       # odd box width in pixels for the Gaussian step

    def __post_init__(self):
        if self.cell_size <= 0 or self.radius <= 0:
            raise InputError("radius and cell_size must be positive")
        if self.smoothing_kernel < 1 or self.smoothing_kernel % 2 == 0:
            raise InputError("smoothing_kernel must be a positive odd integer")

    @property
    def grid_cells(self) -> int:
        return int(round(2.0 * self.radius / self.cell_size))


@dataclass
class OccupancyGrid:
    """Egocentric navigable-space raster. True = navigable."""

    cells: np.ndarray          # (n, n) bool
    cell_size: float
    origin: tuple[float, float]   # world coords of the (0, 0) cell corner
    agent_cell: tuple[int, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.agent_cell is None:
            n = self.cells.shape[0]
            self.agent_cell = (n // 2, n // 2)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """Agent-frame (x, y) of a cell centre."""
        x = self.origin[0] + (row + 0.5) * self.cell_size
        y = self.origin[1] + (col + 0.5) * self.cell_size
        return x, y


def gaussian_sigma(kernel: int) -> float:
    """Blur width implied by an odd kernel size, matching the common
    computer-vision convention sigma = 0.3*((k-1)*0.5 - 1) + 0.8."""
    return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8


def backproject(frame: DepthFrame, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift one depth frame to an (N, 3) agent-frame point cloud.

    Pixels with non-positive or non-finite depth carry no return and are
    dropped. The frame's heading rotates the points about the z axis.
    """
    d = np.asarray(frame.depth, dtype=np.float64)
    if d.ndim != 2 or d.shape != (intrinsics.height, intrinsics.width):
        raise InputError(
            f"depth shape {d.shape} does not match intrinsics "
            f"({intrinsics.height}, {intrinsics.width})"
        )
    valid = np.isfinite(d) & (d > 0.0)
    if not valid.any():
        return np.empty((0, 3), dtype=np.float64)
    v_idx, u_idx = np.nonzero(valid)
    z = d[v_idx, u_idx]
    x_cam = (u_idx - intrinsics.cx) * z / intrinsics.fx   # right
    y_cam = (v_idx - intrinsics.cy) * z / intrinsics.fy   # down

    # camera -> agent: forward = z_cam, left = -x_cam, up = -y_cam
    fwd = z
    left = -x_cam
    up = -y_cam

    th = math.radians(frame.heading_deg)
    c, s = math.cos(th), math.sin(th)
    x = c * fwd - s * left
    y = s * fwd + c * left
    return np.column_stack([x, y, up])


def build_point_cloud(obs: Observation, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Concatenate the back-projections of every frame in the panorama."""
    if not obs.frames:
        raise InputError("observation has no frames")
    parts = [backproject(f, intrinsics) for f in obs.frames]
    return np.vstack(parts) if parts else np.empty((0, 3))


def extract_navigable_region(points: np.ndarray, cfg: PerceptionConfig) -> OccupancyGrid:
    """Rasterise low points into the egocentric grid.

    A point survives iff its height is strictly below the threshold and
    its planar distance from the agent is strictly below the radius.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size and (pts.ndim != 2 or pts.shape[1] != 3):
        raise InputError("points must be an (N, 3) array")
    n = cfg.grid_cells
    cells = np.zeros((n, n), dtype=bool)
    origin = (-cfg.radius, -cfg.radius)
    if pts.size:
        keep = (pts[:, 2] < cfg.height_threshold) & (
            np.hypot(pts[:, 0], pts[:, 1]) < cfg.radius
        )
        pts = pts[keep]
        if len(pts):
            rows = np.floor((pts[:, 0] - origin[0]) / cfg.cell_size).astype(np.intp)
            cols = np.floor((pts[:, 1] - origin[1]) / cfg.cell_size).astype(np.intp)
            cells[rows, cols] = True
    return OccupancyGrid(cells=cells, cell_size=cfg.cell_size, origin=origin,
                         agent_cell=(n // 2, n // 2))


def refine_region(grid: OccupancyGrid, cfg: PerceptionConfig) -> OccupancyGrid:
    """Clean a raw rasterisation into one solid navigable region.

    Fill enclosed holes, smooth with a Gaussian whose width follows the
    configured kernel size, re-binarise at 0.5, and keep only the largest
    8-connected component. An empty grid stays empty.
    """
    cells = grid.cells
    if not cells.any():
        return OccupancyGrid(cells=cells.copy(), cell_size=grid.cell_size,
                             origin=grid.origin, agent_cell=grid.agent_cell)
    filled = ndimage.binary_fill_holes(cells)
    sigma = gaussian_sigma(cfg.smoothing_kernel)
    radius = (cfg.smoothing_kernel - 1) // 2
    # nearest-edge padding: zero padding would eat the region wherever it
    # touches the raster border
    smooth = ndimage.gaussian_filter(filled.astype(np.float64), sigma=sigma,
                                     mode="nearest", radius=radius)
    binary = smooth > 0.5
    if not binary.any():
        return OccupancyGrid(cells=binary, cell_size=grid.cell_size,
                             origin=grid.origin, agent_cell=grid.agent_cell)
    labels, count = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if count > 1:
        sizes = ndimage.sum_labels(binary, labels, index=np.arange(1, count + 1))
        binary = labels == (int(np.argmax(sizes)) + 1)
    return OccupancyGrid(cells=binary, cell_size=grid.cell_size,
                         origin=grid.origin, agent_cell=grid.agent_cell)


def perceive(obs: Observation, intrinsics: CameraIntrinsics,
             cfg: PerceptionConfig) -> OccupancyGrid:
    """Full chain: panorama -> cloud -> raster -> refined navigable grid."""
    cloud = build_point_cloud(obs, intrinsics)
    return refine_region(extract_navigable_region(cloud, cfg), cfg)


# ---------------------------------------------------------------------------
# fixture io

def write_depth_frame(path, frame: DepthFrame) -> None:
    """One JSON header line, then raw little-endian float32, row-major."""
    d = np.ascontiguousarray(frame.depth, dtype="<f4")
    header = {"width": d.shape[1], "height": d.shape[0],
              "heading_deg": frame.heading_deg}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("ascii"))
        fh.write(d.tobytes())


def read_depth_frame(path) -> DepthFrame:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            w, h = int(header["width"]), int(header["height"])
            heading = float(header.get("heading_deg", 0.0))
        except (ValueError, KeyError) as exc:
            raise InputError(f"bad depth frame header in {path}: {exc}") from exc
        raw = fh.read()
    expect = w * h * 4
    if len(raw) != expect:
        raise InputError(
            f"depth frame {path}: expected {expect} payload bytes, got {len(raw)}"
        )
    depth = np.frombuffer(raw, dtype="<f4").reshape(h, w).copy()
    return DepthFrame(depth=depth, heading_deg=heading)

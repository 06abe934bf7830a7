"""Synthetic continuous 2D world with walls of uniform height.

The world is an occupancy raster (True = free floor) over a continuous
coordinate frame: x grows with columns, y grows with rows, the cell (0, 0)
covers [0, cell) x [0, cell).  Poses are continuous; yaw follows the same
convention as agent headings (degrees, CCW positive, 0 = +x).

Rendering is 2.5D: every wall cell is a full-height block, the floor is
the z = 0 plane, the camera sits ``camera_height`` above the floor and
must be below the wall height, so a single first-hit raycast per image
column suffices.  Depth images store distance along the optical axis;
pixels that see neither wall nor floor (sky, or past the world edge) hold
the no-return sentinel 0.0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from skimage.graph import MCP_Geometric

from .angles import normalize_heading
from .errors import InputError
from .perception import CameraIntrinsics, DepthFrame, Observation

AGENT_RADIUS = 0.2
DEFAULT_WALL_HEIGHT = 2.5


@dataclass
class Pose:
    x: float
    y: float
    yaw_deg: float

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Action:
    """Rotate in place, then walk forward along the new yaw."""

    rotation_deg: float
    forward_m: float


@dataclass
class EpisodeSpec:
    id: str
    start: Pose
    goal: tuple[float, float]
    instruction: str
    subtask_hints: list[tuple[float, float]]
    reference_path: list[tuple[float, float]]


@dataclass
class SimWorld:
    free: np.ndarray                 # (rows, cols) bool, True = walkable
    cell_size: float
    wall_height: float = DEFAULT_WALL_HEIGHT
    regions: list[dict] = field(default_factory=list)   # {name, rect:[x0,y0,x1,y1]}
    objects: list[dict] = field(default_factory=list)   # {name, pos:[x,y]}
    _geo_cache: dict = field(default_factory=dict, repr=False)

    @property
    def width_m(self) -> float:
        return self.free.shape[1] * self.cell_size

    @property
    def height_m(self) -> float:
        return self.free.shape[0] * self.cell_size

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.cell_size)), int(math.floor(x / self.cell_size)))

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def is_free(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return False
        r, c = self.cell_of(x, y)
        return bool(self.free[r, c])


@dataclass
class MapBundle:
    world: SimWorld
    episodes: list[EpisodeSpec]


@njit(cache=True)
def _raycast(free: np.ndarray, cell: float, x0: float, y0: float,
             az: np.ndarray, out_t: np.ndarray, out_hit: np.ndarray) -> None:  # pragma: no cover
    rows, cols = free.shape
    for k in range(az.shape[0]):
        dx = math.cos(az[k])
        dy = math.sin(az[k])
        col = int(math.floor(x0 / cell))
        row = int(math.floor(y0 / cell))
        stepc = 1 if dx > 0.0 else -1
        stepr = 1 if dy > 0.0 else -1
        if dx > 0.0:
            tmaxx = ((col + 1) * cell - x0) / dx
            tdx = cell / dx
        elif dx < 0.0:
            tmaxx = (col * cell - x0) / dx
            tdx = -cell / dx
        else:
            tmaxx = 1e30
            tdx = 1e30
        if dy > 0.0:
            tmaxy = ((row + 1) * cell - y0) / dy
            tdy = cell / dy
        elif dy < 0.0:
            tmaxy = (row * cell - y0) / dy
            tdy = -cell / dy
        else:
            tmaxy = 1e30
            tdy = 1e30
        t = 0.0
        hit = np.uint8(0)
        while True:
            if tmaxx < tmaxy:
                t = tmaxx
                tmaxx += tdx
                col += stepc
            else:
                t = tmaxy
                tmaxy += tdy
                row += stepr
            if col < 0 or col >= cols or row < 0 or row >= rows:
                break
            if free[row, col] == 0:
                hit = np.uint8(1)
                break
        out_t[k] = t
        out_hit[k] = hit


def raycast(world: SimWorld, x: float, y: float,
            azimuths_rad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First-hit horizontal distances from (x, y) along each azimuth.

    Returns (t, hit): t is the distance to the first wall-cell boundary
    when hit is True, otherwise the distance to the world edge.
    """
    if not world.is_free(x, y):
        raise InputError(f"raycast origin ({x:.3f}, {y:.3f}) is not in free space")
    az = np.ascontiguousarray(azimuths_rad, dtype=np.float64)
    out_t = np.empty(az.shape[0], dtype=np.float64)
    out_hit = np.empty(az.shape[0], dtype=np.uint8)
    _raycast(world.free.astype(np.uint8), world.cell_size, x, y, az, out_t, out_hit)
    return out_t, out_hit.astype(bool)


def render_view(world: SimWorld, pose: Pose, view_heading_deg: float,
                intr: CameraIntrinsics) -> DepthFrame:
    """Depth image looking along yaw + view heading."""
    if intr.camera_height >= world.wall_height:
        raise InputError("camera must sit below the wall height")
    u = np.arange(intr.width, dtype=np.float64)
    tan_u = (u - intr.cx) / intr.fx
    alpha = np.arctan(tan_u)                       # right of optical axis
    az = math.radians(pose.yaw_deg + view_heading_deg) - alpha
    d_hor, hit = raycast(world, pose.x, pose.y, az)
    k_u = np.sqrt(1.0 + tan_u ** 2)
    t_block = d_hor / k_u                          # depth of wall/edge per column

    v = np.arange(intr.height, dtype=np.float64)
    dv = (v - intr.cy) / intr.fy                   # down positive
    with np.errstate(divide="ignore"):
        t_floor = np.where(dv > 0, intr.camera_height / np.where(dv > 0, dv, 1.0), np.inf)

    tf = t_floor[:, None]
    floor_seen = tf * k_u[None, :] <= d_hor[None, :]
    z_wall = intr.camera_height - dv[:, None] * t_block[None, :]
    wall_seen = hit[None, :] & (z_wall <= world.wall_height) & ~floor_seen
    depth = np.zeros((intr.height, intr.width), dtype=np.float64)
    depth = np.where(floor_seen, tf, depth)
    depth = np.where(wall_seen, t_block[None, :], depth)
    return DepthFrame(depth=depth.astype(np.float32),
                      heading_deg=view_heading_deg)


def render_panorama(world: SimWorld, pose: Pose, intr: CameraIntrinsics,
                    n_views: int) -> Observation:
    """n_views depth frames at evenly spaced, strictly increasing headings
    starting from straight ahead (0, 360/n, ..., 360 - 360/n)."""
    if n_views < 1:
        raise InputError("n_views must be >= 1")
    frames = [render_view(world, pose, i * 360.0 / n_views, intr)
              for i in range(n_views)]
    return Observation(frames=frames)


def to_action(distance_m: float, heading_deg: float) -> Action:
    return Action(rotation_deg=heading_deg, forward_m=distance_m)


def step(world: SimWorld, pose: Pose, action: Action) -> Pose:
    """Rotate, then move forward, stopping ``AGENT_RADIUS`` short of the
    first obstruction or world edge along the way."""
    if action.forward_m < 0:
        raise InputError("forward distance must be non-negative")
    if not world.is_free(pose.x, pose.y):
        raise InputError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in free space")
    yaw = normalize_heading(pose.yaw_deg + action.rotation_deg)
    if action.forward_m == 0.0:
        return Pose(pose.x, pose.y, yaw)
    t, _ = raycast(world, pose.x, pose.y, np.array([math.radians(yaw)]))
    allowed = min(action.forward_m, max(0.0, float(t[0]) - AGENT_RADIUS))
    x = pose.x + allowed * math.cos(math.radians(yaw))
    y = pose.y + allowed * math.sin(math.radians(yaw))
    return Pose(x, y, yaw)


def nearest_free_cell_center(world: SimWorld, x: float, y: float) -> tuple[float, float]:
    rows, cols = np.nonzero(world.free)
    if len(rows) == 0:
        raise InputError("world has no free space")
    cxs = (cols + 0.5) * world.cell_size
    cys = (rows + 0.5) * world.cell_size
    k = int(np.argmin((cxs - x) ** 2 + (cys - y) ** 2))
    return float(cxs[k]), float(cys[k])


def inject_perturbation(world: SimWorld, pose: Pose, magnitude: float,
                        rng: np.random.Generator) -> Pose:
    """Displace the position by ``magnitude`` metres in a random direction,
    keeping yaw. Directions landing in a wall are resampled up to 16
    times; if none is free the last candidate snaps to the nearest free
    cell centre."""
    if magnitude < 0:
        raise InputError("perturbation magnitude must be non-negative")
    cand_x, cand_y = pose.x, pose.y
    for _ in range(16):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        cand_x = pose.x + magnitude * math.cos(theta)
        cand_y = pose.y + magnitude * math.sin(theta)
        if world.is_free(cand_x, cand_y):
            return Pose(cand_x, cand_y, pose.yaw_deg)
    sx, sy = nearest_free_cell_center(world, cand_x, cand_y)
    return Pose(sx, sy, pose.yaw_deg)


# ---------------------------------------------------------------------------
# geodesic distances

def _distance_field(world: SimWorld, target_cell: tuple[int, int]) -> np.ndarray:
    if target_cell in world._geo_cache:
        return world._geo_cache[target_cell]
    costs = np.where(world.free, 1.0, np.inf)
    mcp = MCP_Geometric(costs)
    cum, _ = mcp.find_costs(starts=[target_cell])
    fieldm = cum * world.cell_size
    world._geo_cache[target_cell] = fieldm
    return fieldm


def geodesic_distance(world: SimWorld, a: tuple[float, float],
                      b: tuple[float, float]) -> float:
    """Shortest walkable distance between two points, in metres, computed
    on the world raster (8-connected, diagonal steps cost sqrt(2) cells).
    Returns inf when the points are not connected; raises when either
    endpoint is inside a wall."""
    for p in (a, b):
        if not world.is_free(p[0], p[1]):
            raise InputError(f"geodesic endpoint {p} is not in free space")
    fieldm = _distance_field(world, world.cell_of(b[0], b[1]))
    r, c = world.cell_of(a[0], a[1])
    return float(fieldm[r, c])


# ---------------------------------------------------------------------------
# map bundle io

def write_pgm(path, img: np.ndarray) -> None:
    a = np.ascontiguousarray(img, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii"))
        fh.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise InputError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens, i = [], 2
    while len(tokens) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    i += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise InputError(f"{path}: expected maxval 255, got {maxval}")
    raw = data[i:i + w * h]
    if len(raw) != w * h:
        raise InputError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def _episode_from_json(obj: dict) -> EpisodeSpec:
    try:
        start = Pose(float(obj["start"]["x"]), float(obj["start"]["y"]),
                     float(obj["start"].get("yaw_deg", 0.0)))
        return EpisodeSpec(
            id=str(obj["id"]),
            start=start,
            goal=(float(obj["goal"][0]), float(obj["goal"][1])),
            instruction=str(obj["instruction"]),
            subtask_hints=[(float(p[0]), float(p[1])) for p in obj.get("subtask_hints", [])],
            reference_path=[(float(p[0]), float(p[1])) for p in obj.get("reference_path", [])],
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed episode entry: {exc}") from exc


def _episode_to_json(ep: EpisodeSpec) -> dict:
    return {
        "id": ep.id,
        "start": {"x": ep.start.x, "y": ep.start.y, "yaw_deg": ep.start.yaw_deg},
        "goal": list(ep.goal),
        "instruction": ep.instruction,
        "subtask_hints": [list(p) for p in ep.subtask_hints],
        "reference_path": [list(p) for p in ep.reference_path],
    }


def load_map_bundle(directory) -> MapBundle:
    """Read ``world.pgm`` (0 = wall, 255 = free) and ``world.json`` from a
    bundle directory."""
    import os

    pgm = os.path.join(directory, "world.pgm")
    meta_path = os.path.join(directory, "world.json")
    if not (os.path.exists(pgm) and os.path.exists(meta_path)):
        raise InputError(f"{directory}: missing world.pgm or world.json")
    img = read_pgm(pgm)
    with open(meta_path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{meta_path}: invalid JSON: {exc}") from exc
    try:
        cell = float(meta["cell_size"])
        wall_h = float(meta.get("wall_height", DEFAULT_WALL_HEIGHT))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{meta_path}: bad world metadata: {exc}") from exc
    world = SimWorld(
        free=img >= 128,
        cell_size=cell,
        wall_height=wall_h,
        regions=list(meta.get("regions", [])),
        objects=list(meta.get("objects", [])),
    )
    episodes = [_episode_from_json(e) for e in meta.get("episodes", [])]
    return MapBundle(world=world, episodes=episodes)


def save_map_bundle(directory, bundle: MapBundle) -> None:
    import os

    os.makedirs(directory, exist_ok=True)
    write_pgm(os.path.join(directory, "world.pgm"),
              np.where(bundle.world.free, 255, 0).astype(np.uint8))
    meta = {
        "cell_size": bundle.world.cell_size,
        "wall_height": bundle.world.wall_height,
        "regions": bundle.world.regions,
        "objects": bundle.world.objects,
        "episodes": [_episode_to_json(e) for e in bundle.episodes],
    }
    with open(os.path.join(directory, "world.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

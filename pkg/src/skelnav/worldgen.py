"""Authoring helpers for synthetic worlds and episodes.

Corridor worlds are Manhattan staircases: axis-aligned legs joined at
right angles, never self-crossing (x advances monotonically, y drifts one
way per world).  Each leg contributes exactly one instruction sentence and
one subtask hint (the leg's far end), so the step budget equals the leg
count whenever there are at least ``min_steps`` legs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import InputError
from .simenv import EpisodeSpec, MapBundle, Pose, SimWorld

_COMPASS = {(1, 0): "east", (-1, 0): "west", (0, 1): "north", (0, -1): "south"}
_CORNER_OBJECTS = ("red pillar", "potted plant", "blue crate", "floor lamp",
                   "coat rack", "water cooler", "green bench", "steel drum")


def random_blob_mask(shape: tuple[int, int], rng: np.random.Generator,
                     smooth_sigma: float = 14.0,
                     quantile: float = 0.62) -> np.ndarray:
    """Organic boolean blobs: smoothed white noise over a quantile."""
    noise = rng.standard_normal(shape)
    smooth = ndimage.gaussian_filter(noise, smooth_sigma)
    return smooth > np.quantile(smooth, quantile)


def _polyline_from_legs(legs: list[tuple[tuple[int, int], float]],
                        start: tuple[float, float]) -> list[tuple[float, float]]:
    pts = [start]
    x, y = start
    for (dx, dy), length in legs:
        x, y = x + dx * length, y + dy * length
        pts.append((x, y))
    return pts


def densify_polyline(pts: list[tuple[float, float]],
                     spacing: float = 0.5) -> list[tuple[float, float]]:
    """Vertices plus intermediate samples every ``spacing`` metres."""
    out = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        n = max(1, int(math.ceil(seg / spacing - 1e-9)))
        for k in range(1, n):
            f = k / n
            out.append((a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])))
        out.append(b)
    return out


def rasterize_corridors(pts: list[tuple[float, float]], width_m: float,
                        cell_size: float, margin_m: float = 0.6) -> tuple[SimWorld, tuple[float, float]]:
    """Stamp a corridor of the given width along each axis-aligned segment.
    Returns the world plus the offset added to all input coordinates to
    keep a wall margin inside the raster."""
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    half = width_m / 2.0
    off_x = margin_m + half - min(xs)
    off_y = margin_m + half - min(ys)
    w_m = (max(xs) - min(xs)) + 2 * (margin_m + half)
    h_m = (max(ys) - min(ys)) + 2 * (margin_m + half)
    cols = int(math.ceil(w_m / cell_size))
    rows = int(math.ceil(h_m / cell_size))
    free = np.zeros((rows, cols), dtype=bool)
    cx = (np.arange(cols) + 0.5) * cell_size
    cy = (np.arange(rows) + 0.5) * cell_size
    for a, b in zip(pts, pts[1:]):
        ax, ay = a[0] + off_x, a[1] + off_y
        bx, by = b[0] + off_x, b[1] + off_y
        if abs(ax - bx) > 1e-9 and abs(ay - by) > 1e-9:
            raise InputError("corridor segments must be axis-aligned")
        x0, x1 = min(ax, bx) - half, max(ax, bx) + half
        y0, y1 = min(ay, by) - half, max(ay, by) + half
        in_x = (cx >= x0) & (cx <= x1)
        in_y = (cy >= y0) & (cy <= y1)
        free[np.ix_(in_y, in_x)] = True
    return SimWorld(free=free, cell_size=cell_size), (off_x, off_y)


def _leg_sentence(i: int, direction: tuple[int, int], last: bool) -> str:
    name = _COMPASS[direction]
    if i == 0:
        return f"Head {name} along the corridor."
    if last:
        return f"Turn {name} at the corner and walk until the corridor ends."
    return f"Turn {name} at the corner and keep going."


def corridor_bundle(bundle_id: str, legs: list[tuple[tuple[int, int], float]],
                    corridor_width_m: float = 1.6,
                    cell_size: float = 0.05) -> MapBundle:
    """Build a one-episode bundle from a leg list [((dx, dy), length_m)]."""
    if not legs:
        raise InputError("corridor needs at least one leg")
    pts = _polyline_from_legs(legs, (0.0, 0.0))
    world, (off_x, off_y) = rasterize_corridors(pts, corridor_width_m, cell_size)
    shifted = [(x + off_x, y + off_y) for x, y in pts]
    world.objects = [
        {"name": _CORNER_OBJECTS[i % len(_CORNER_OBJECTS)],
         "pos": [shifted[i + 1][0], shifted[i + 1][1]]}
        for i in range(len(legs))
    ]
    sentences = [_leg_sentence(i, d, i == len(legs) - 1)
                 for i, (d, _) in enumerate(legs)]
    first_dir = legs[0][0]
    yaw = math.degrees(math.atan2(first_dir[1], first_dir[0]))
    episode = EpisodeSpec(
        id=bundle_id,
        start=Pose(shifted[0][0], shifted[0][1], yaw),
        goal=shifted[-1],
        instruction=" ".join(sentences),
        subtask_hints=shifted[1:],
        reference_path=densify_polyline(shifted),
    )
    return MapBundle(world=world, episodes=[episode])


# Twenty fixed staircase mazes: 6-9 legs each, lengths 2.6-4.2 m, x always
# advancing, y drifting one way so corridors never touch each other.
_MAZE_TABLE: list[list[tuple[tuple[int, int], float]]] = []


def _build_maze_table() -> None:
    lengths = (3.0, 3.4, 2.8, 3.8, 3.2, 4.2, 2.6, 3.6)
    for k in range(20):
        n_legs = 6 + (k % 4)            # 6, 7, 8, 9 legs
        ysign = 1 if k % 2 == 0 else -1
        legs = []
        for i in range(n_legs):
            length = lengths[(k + 2 * i) % len(lengths)]
            if i % 2 == 0:
                legs.append(((1, 0), length))
            else:
                legs.append(((0, ysign), length))
        _MAZE_TABLE.append(legs)


_build_maze_table()


def standard_maze_suite() -> list[MapBundle]:
    """The fixed 20-maze fixture set used by the closed-loop checks."""
    return [corridor_bundle(f"maze_{k:02d}", legs)
            for k, legs in enumerate(_MAZE_TABLE)]


def closet_bundle(n_sentences: int = 6) -> MapBundle:
    """A tiny 2 m x 2 m room whose goal is the start pose: every candidate
    waypoint falls inside the exclusion radius, so the agent can only
    rotate in place — and that is the correct behaviour."""
    cell = 0.05
    side = 2.0
    margin = 0.4
    n = int(round((side + 2 * margin) / cell))
    free = np.zeros((n, n), dtype=bool)
    lo = int(round(margin / cell))
    hi = int(round((margin + side) / cell))
    free[lo:hi, lo:hi] = True
    world = SimWorld(free=free, cell_size=cell)
    center = (margin + side / 2.0, margin + side / 2.0)
    sentences = ["Stay where you are."] * n_sentences
    episode = EpisodeSpec(
        id="closet_00",
        start=Pose(center[0], center[1], 0.0),
        goal=center,
        instruction=" ".join(sentences),
        subtask_hints=[center] * n_sentences,
        reference_path=[center],
    )
    return MapBundle(world=world, episodes=[episode])


def random_corridor_bundle(bundle_id: str, rng: np.random.Generator,
                           n_legs: int = 6,
                           corridor_width_m: float = 1.6,
                           cell_size: float = 0.05) -> MapBundle:
    """Seeded staircase maze for robustness sweeps: same shape family as
    the fixed suite, leg lengths and drift direction drawn from ``rng``."""
    ysign = 1 if rng.random() < 0.5 else -1
    legs = []
    for i in range(n_legs):
        length = float(np.round(rng.uniform(2.6, 4.2), 2))
        legs.append(((1, 0) if i % 2 == 0 else (0, ysign), length))
    return corridor_bundle(bundle_id, legs, corridor_width_m, cell_size)

"""Waypoint extraction from a navigable-space skeleton.

Skeleton pixels are picked by degree, clustered, snapped back onto the
skeleton, converted to polar coordinates in the agent frame, and pruned by
an exclusion radius.  Everything is deterministic: pixel lists are kept in
row-major order and all ties break toward the smaller row-major index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .angles import angular_difference, heading_to
from .errors import InputError
from .perception import OccupancyGrid
from .skeleton import pixel_degrees


class DegreeConfig(enum.Enum):
    """Which skeleton pixels count as waypoint seeds."""

    DEG1 = "deg1"      # endpoints
    DEG_GT2 = "gt2"    # junctions
    DEG_NE2 = "ne2"    # endpoints + junctions + isolated pixels


@dataclass(frozen=True)
class WaypointConfig:
    degree_config: DegreeConfig = DegreeConfig.DEG1
    merge_radius_px: int = 10
    min_distance_m: float = 1.0


@dataclass
class Waypoint:
    id: int
    distance_m: float
    heading_deg: float
    pixel: tuple[int, int]
    description: str = ""
    fallback: bool = False


FALLBACK_DESCRIPTION = "no reachable waypoint detected; rotating in place to rescan"


def select_by_degree(skel: np.ndarray, cfg: DegreeConfig) -> list[tuple[int, int]]:
    """Skeleton pixels matching the degree predicate, row-major order."""
    deg = pixel_degrees(skel)
    on = np.asarray(skel, dtype=bool)
    if cfg is DegreeConfig.DEG1:
        pick = on & (deg == 1)
    elif cfg is DegreeConfig.DEG_GT2:
        pick = on & (deg > 2)
    elif cfg is DegreeConfig.DEG_NE2:
        pick = on & (deg != 2)
    else:  # pragma: no cover - enum is closed
        raise InputError(f"unknown degree config {cfg!r}")
    rows, cols = np.nonzero(pick)
    return list(zip(rows.tolist(), cols.tolist()))


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _merge_once(pixels: list[tuple[int, int]], radius_px: float) -> list[tuple[int, int]]:
    n = len(pixels)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    r2 = float(radius_px) ** 2
    for i in range(n):
        for j in range(i + 1, n):
            dr = pixels[i][0] - pixels[j][0]
            dc = pixels[i][1] - pixels[j][1]
            if dr * dr + dc * dc <= r2:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    clusters: dict[int, list[tuple[int, int]]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(pixels[i])
    out = []
    for root in sorted(clusters):
        members = clusters[root]
        mr = sum(p[0] for p in members) / len(members)
        mc = sum(p[1] for p in members) / len(members)
        out.append((_round_half_away(mr), _round_half_away(mc)))
    return sorted(set(out))


def merge_close(pixels: list[tuple[int, int]], radius_px: float) -> list[tuple[int, int]]:
    """Cluster pixels transitively within ``radius_px`` and replace each
    cluster by its rounded centroid, repeated until stable so the result
    is a fixpoint (merging again changes nothing)."""
    cur = sorted(set((int(r), int(c)) for r, c in pixels))
    while True:
        nxt = _merge_once(cur, radius_px)
        if nxt == cur:
            return cur
        cur = nxt


def snap_to_skeleton(pixels: list[tuple[int, int]], skel: np.ndarray) -> list[tuple[int, int]]:
    """Move each pixel to its nearest skeleton pixel (Euclidean; ties go to
    the smaller row-major index). Pixels already on the skeleton stay."""
    on = np.asarray(skel, dtype=bool)
    srows, scols = np.nonzero(on)
    if len(srows) == 0:
        return list(pixels)
    out = []
    for r, c in pixels:
        if on[r, c]:
            out.append((r, c))
            continue
        d2 = (srows - r) ** 2 + (scols - c) ** 2
        k = int(np.argmin(d2))  # argmin returns the first minimum: row-major tie-break
        out.append((int(srows[k]), int(scols[k])))
    return out


def pixel_to_polar(pixel: tuple[int, int], grid: OccupancyGrid) -> tuple[float, float]:
    """Cell centre -> (distance_m, heading_deg) relative to the agent at
    the grid origin (0, 0 in the agent frame)."""
    x, y = grid.cell_center(pixel[0], pixel[1])
    return math.hypot(x, y), heading_to(x, y)


def filter_near(waypoints: list[Waypoint], min_distance_m: float) -> list[Waypoint]:
    """Drop waypoints strictly closer than the exclusion radius."""
    return [w for w in waypoints if w.distance_m >= min_distance_m]


def make_fallback_waypoint() -> Waypoint:
    """Pseudo-waypoint used when nothing survives: rotate 90 deg left in
    place so the next panorama covers fresh ground."""
    return Waypoint(id=0, distance_m=0.0, heading_deg=90.0, pixel=(-1, -1),
                    description=FALLBACK_DESCRIPTION, fallback=True)


def generate_waypoints(skel: np.ndarray, grid: OccupancyGrid,
                       cfg: WaypointConfig) -> list[Waypoint]:
    """Full extraction: degree selection, merging, snapping, polar
    conversion, exclusion filter, then id assignment in row-major order.

    Returns an empty list when nothing qualifies; callers decide whether
    to substitute the fallback waypoint.
    """
    seeds = select_by_degree(skel, cfg.degree_config)
    if not seeds:
        return []
    merged = merge_close(seeds, cfg.merge_radius_px)
    snapped = snap_to_skeleton(merged, skel)
    snapped = sorted(set(snapped))
    wps = []
    for r, c in snapped:
        dist, heading = pixel_to_polar((r, c), grid)
        wps.append(Waypoint(id=0, distance_m=dist, heading_deg=heading, pixel=(r, c)))
    wps = filter_near(wps, cfg.min_distance_m)
    for i, w in enumerate(wps):
        w.id = i
    return wps


def build_decision_space(waypoints: list[Waypoint]) -> list[Waypoint]:
    """Order candidates the way they are presented for choice: by absolute
    heading (most straight-ahead first), ties by id."""
    return sorted(waypoints, key=lambda w: (abs(w.heading_deg), w.id))


def decision_space_payload(waypoints: list[Waypoint]) -> list[dict]:
    """JSON-ready rendering of an ordered decision space. Values keep full
    float precision so a stored record replays to the bit."""
    return [
        {
            "id": w.id,
            "distance_m": w.distance_m,
            "heading_deg": w.heading_deg,
            "description": w.description,
            "fallback": w.fallback,
        }
        for w in waypoints
    ]


def nearest_view_index(heading_deg: float, view_headings: list[float]) -> int:
    """Index of the panorama view whose heading is circularly closest;
    ties resolve to the smaller index."""
    if not view_headings:
        raise InputError("view_headings is empty")
    best, best_d = 0, math.inf
    for i, vh in enumerate(view_headings):
        d = angular_difference(heading_deg, vh)
        if d < best_d - 1e-12:
            best, best_d = i, d
    return best

"""Trajectory evaluation metrics.

Seven quantities per episode: trajectory length (TL), geodesic navigation
error at the final pose (NE), success (SR: NE strictly under the success
radius), oracle success (OSR: success at the closest pose along the
trajectory), path-efficiency-weighted success (SPL), normalised dynamic
time warping similarity (nDTW), and its success-gated variant (SDTW,
success-weighted convention).
"""

from __future__ import annotations

import math

from .errors import InputError
from .regulator import EpisodeRecord
from .simenv import SimWorld, geodesic_distance

SUCCESS_RADIUS_M = 3.0
DTW_THRESHOLD_M = 3.0


def path_length(path: list[tuple[float, float]]) -> float:
    if not path:
        raise InputError("path is empty")
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += math.hypot(b[0] - a[0], b[1] - a[1])
    return total


def dtw(path: list[tuple[float, float]],
        ref: list[tuple[float, float]]) -> float:
    """Classic boundary-matched monotone DTW with Euclidean point costs.

    The recurrence accumulates ``cost + min(...)`` in that order; keep it
    that way — equality checks against alternative alignment enumerations
    rely on reproducing the exact float fold.
    """
    if not path or not ref:
        raise InputError("dtw needs two non-empty paths")
    n, m = len(path), len(ref)
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        for j in range(1, m + 1):
            c = math.hypot(path[i - 1][0] - ref[j - 1][0],
                           path[i - 1][1] - ref[j - 1][1])
            cur[j] = c + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return prev[m]


def ndtw(path: list[tuple[float, float]], ref: list[tuple[float, float]],
         threshold_m: float = DTW_THRESHOLD_M) -> float:
    """exp(-DTW / (|ref| * threshold)); 1.0 exactly for a perfect match."""
    return math.exp(-dtw(path, ref) / (len(ref) * threshold_m))


def spl(success: bool, shortest_m: float, taken_m: float) -> float:
    """Success weighted by path efficiency. A zero-length shortest path
    (goal at start) scores as plain success."""
    if shortest_m == 0.0:
        return 1.0 if success else 0.0
    return (shortest_m / max(taken_m, shortest_m)) if success else 0.0


METRIC_FIELDS = ("tl", "ne", "sr", "osr", "spl", "ndtw", "sdtw")


def evaluate_record(world: SimWorld, record: EpisodeRecord,
                    success_radius_m: float = SUCCESS_RADIUS_M,
                    dtw_threshold_m: float = DTW_THRESHOLD_M) -> dict:
    """All seven metrics for one episode record.

    A record carrying the failed flag scores SR 0 (and therefore SPL and
    SDTW 0) regardless of where its partial trajectory ended; OSR and the
    geometry-only metrics are still computed from the partial trajectory.
    """
    path = record.executed_path()
    goal = record.goal
    tl = path_length(path)
    ne = geodesic_distance(world, path[-1], goal)
    sr = (not record.failed) and ne < success_radius_m
    best = min(geodesic_distance(world, p, goal) for p in path)
    osr = best < success_radius_m
    shortest = geodesic_distance(world, (record.start_pose.x, record.start_pose.y),
                                 goal)
    ref = record.reference_path if record.reference_path else [goal]
    nd = ndtw(path, ref, dtw_threshold_m)
    return {
        "episode_id": record.episode_id,
        "failed": record.failed,
        "tl": tl,
        "ne": ne,
        "sr": 1.0 if sr else 0.0,
        "osr": 1.0 if osr else 0.0,
        "spl": spl(sr, shortest, tl),
        "ndtw": nd,
        "sdtw": nd if sr else 0.0,
    }


def aggregate(per_episode: list[dict]) -> dict:
    """Plain means over episodes for each metric field."""
    if not per_episode:
        raise InputError("no episode metrics to aggregate")
    out = {"n_episodes": len(per_episode)}
    for key in METRIC_FIELDS:
        out[key] = sum(e[key] for e in per_episode) / len(per_episode)
    return out


def build_report(world: SimWorld, records: list[EpisodeRecord],
                 success_radius_m: float = SUCCESS_RADIUS_M,
                 dtw_threshold_m: float = DTW_THRESHOLD_M) -> dict:
    per = [evaluate_record(world, r, success_radius_m, dtw_threshold_m)
           for r in sorted(records, key=lambda r: r.episode_id)]
    return {
        "meta": {
            "success_radius_m": success_radius_m,
            "dtw_threshold_m": dtw_threshold_m,
            "sdtw_convention": "success-weighted",
        },
        "episodes": per,
        "aggregate": aggregate(per),
    }

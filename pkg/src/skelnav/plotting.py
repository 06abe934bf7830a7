"""Figure rendering for episode records and metric reports.

Everything writes SVG files; no interactive UI exists or is wanted.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .regulator import EpisodeRecord
from .simenv import Pose, SimWorld


def _chosen_waypoint_world(step_record, pose_before: Pose) -> tuple[float, float]:
    entry = next(e for e in step_record.decision_space
                 if e["id"] == step_record.chosen_id)
    th = math.radians(pose_before.yaw_deg + entry["heading_deg"])
    return (pose_before.x + entry["distance_m"] * math.cos(th),
            pose_before.y + entry["distance_m"] * math.sin(th))


def plot_episode(world: SimWorld, record: EpisodeRecord, out_path) -> None:
    """Top-down view: walls, reference path (green), executed path (blue),
    start/goal markers, and each step's chosen waypoint (orange)."""
    fig, ax = plt.subplots(figsize=(7, 7))
    ax.imshow(world.free, origin="lower", cmap="gray", vmin=0, vmax=1,
              extent=(0, world.width_m, 0, world.height_m),
              interpolation="nearest")
    if record.reference_path:
        rx = [p[0] for p in record.reference_path]
        ry = [p[1] for p in record.reference_path]
        ax.plot(rx, ry, color="tab:green", lw=2, label="reference path")
    path = record.executed_path()
    ax.plot([p[0] for p in path], [p[1] for p in path], color="tab:blue",
            lw=1.6, marker="o", ms=3, label="executed path")
    wp_x, wp_y = [], []
    pose = record.start_pose
    for s in record.steps:
        wx, wy = _chosen_waypoint_world(s, pose)
        wp_x.append(wx)
        wp_y.append(wy)
        pose = s.pose
    if wp_x:
        ax.scatter(wp_x, wp_y, color="tab:orange", marker="x", s=40, zorder=5,
                   label="chosen waypoints")
    ax.scatter([record.start_pose.x], [record.start_pose.y], color="tab:blue",
               marker="s", s=70, zorder=6, label="start")
    ax.scatter([record.goal[0]], [record.goal[1]], color="tab:red", marker="*",
               s=160, zorder=6, label="goal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"episode {record.episode_id} ({record.mode})")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_aspect("equal")
    fig.savefig(out_path, format="svg", bbox_inches="tight")
    plt.close(fig)


def plot_metrics_summary(report: dict, out_path) -> None:
    """Bar chart of the aggregate ratio metrics with TL/NE in the title."""
    agg = report["aggregate"]
    ratio_keys = ("sr", "osr", "spl", "ndtw", "sdtw")
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(ratio_keys))
    ax.bar(xs, [agg[k] for k in ratio_keys], color="tab:blue")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([k.upper() for k in ratio_keys])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean over episodes")
    ax.set_title(f"{agg['n_episodes']} episodes | "
                 f"TL {agg['tl']:.2f} m | NE {agg['ne']:.2f} m")
    for x, k in zip(xs, ratio_keys):
        ax.text(x, agg[k] + 0.02, f"{agg[k]:.2f}", ha="center", fontsize=8)
    fig.savefig(out_path, format="svg", bbox_inches="tight")
    plt.close(fig)


def plot_robustness(baseline: dict, degraded: dict, labels: tuple[str, str],
                    out_path) -> None:
    """Grouped bars comparing a baseline and a degraded condition."""
    ratio_keys = ("sr", "osr", "spl", "ndtw", "sdtw")
    b = baseline["aggregate"]
    d = degraded["aggregate"]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = list(range(len(ratio_keys)))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], [b[k] for k in ratio_keys], width,
           label=labels[0], color="tab:blue")
    ax.bar([x + width / 2 for x in xs], [d[k] for k in ratio_keys], width,
           label=labels[1], color="tab:orange")
    ax.set_xticks(xs)
    ax.set_xticklabels([k.upper() for k in ratio_keys])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean over episodes")
    ax.legend()
    fig.savefig(out_path, format="svg", bbox_inches="tight")
    plt.close(fig)

"""Closed-loop episode runner.

An episode decomposes its instruction into subtasks (one per sentence),
fixes a step budget of ``max(#subtasks, min_steps)``, and then repeats the
perceive -> skeletonise -> extract waypoints -> choose -> act -> assess
cycle for exactly that many steps.  Every step is appended to an episode
record that carries enough information to re-run the episode later and
land on bit-identical poses.

Feedback bookkeeping: the feedback *used* by step t (what the chooser
saw) is stored on step t; the assessment produced at the end of step t
becomes step t+1's input, and the very last one is kept on the record as
``final_feedback``.  Step 1 always sees the fixed "no feedback yet"
placeholder.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import zlib
from dataclasses import dataclass, field

import numpy as np

from .backends import (COMPLETION_TOKEN, Feedback, HistoryEntry, ModelBackend,
                       StepContext, Verdict, _safe_geodesic, initial_feedback,
                       make_replay_backend)
from .errors import InputError, ProtocolError
from .perception import CameraIntrinsics, PerceptionConfig, perceive
from .simenv import (EpisodeSpec, MapBundle, Pose, SimWorld, inject_perturbation,
                     render_panorama, step, to_action)
from .skeleton import skeletonize
from .waypoint import (DegreeConfig, Waypoint, WaypointConfig,
                       build_decision_space, decision_space_payload,
                       generate_waypoints, make_fallback_waypoint,
                       nearest_view_index)

ADVANCE_RADIUS_M = 1.5


@dataclass(frozen=True)
class EpisodeConfig:
    min_steps: int = 6
    n_views: int = 12
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    waypoint: WaypointConfig = field(default_factory=WaypointConfig)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    perturb_magnitude: float = 0.0   # metres; 0 disables the perturbation

    def to_json(self) -> dict:
        return {
            "min_steps": self.min_steps,
            "n_views": self.n_views,
            "perturb_magnitude": self.perturb_magnitude,
            "perception": {
                "height_threshold": self.perception.height_threshold,
                "radius": self.perception.radius,
                "cell_size": self.perception.cell_size,
                "smoothing_kernel": self.perception.smoothing_kernel,
            },
            "waypoint": {
                "degree_config": self.waypoint.degree_config.value,
                "merge_radius_px": self.waypoint.merge_radius_px,
                "min_distance_m": self.waypoint.min_distance_m,
            },
            "intrinsics": {
                "width": self.intrinsics.width,
                "height": self.intrinsics.height,
                "horizontal_fov_deg": self.intrinsics.horizontal_fov_deg,
                "camera_height": self.intrinsics.camera_height,
            },
        }

    @staticmethod
    def from_json(obj: dict) -> "EpisodeConfig":
        try:
            return EpisodeConfig(
                min_steps=int(obj["min_steps"]),
                n_views=int(obj["n_views"]),
                perturb_magnitude=float(obj.get("perturb_magnitude", 0.0)),
                perception=PerceptionConfig(**obj["perception"]),
                waypoint=WaypointConfig(
                    degree_config=DegreeConfig(obj["waypoint"]["degree_config"]),
                    merge_radius_px=int(obj["waypoint"]["merge_radius_px"]),
                    min_distance_m=float(obj["waypoint"]["min_distance_m"]),
                ),
                intrinsics=CameraIntrinsics(**obj["intrinsics"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed episode config: {exc}") from exc


def config_hash(cfg: EpisodeConfig) -> str:
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode("ascii")
    return hashlib.sha256(blob).hexdigest()[:12]


def decompose_instruction(instruction: str) -> list[str]:
    """One subtask per sentence. Text without sentence punctuation is a
    single subtask."""
    if not instruction or not instruction.strip():
        raise InputError("instruction is empty")
    parts = re.split(r"(?<=[.!?])\s+", instruction.strip())
    out = [p.strip() for p in parts if p.strip(" .!?")]
    return out if out else [instruction.strip()]


@dataclass
class StepRecord:
    timestep: int
    pose: Pose                      # pose after this step's action
    subtask_index: int
    perturbed: bool
    decision_space: list[dict]
    chosen_id: int
    explanation: str
    feedback: Feedback              # the feedback this step's choice saw


@dataclass
class EpisodeRecord:
    episode_id: str
    mode: str
    seed: int
    config: dict
    config_hash: str
    start_pose: Pose
    goal: tuple[float, float]
    instruction: str
    subtasks: list[str]
    subtask_hints: list[tuple[float, float]]
    reference_path: list[tuple[float, float]]
    max_steps: int
    perturb_step: int | None = None
    steps: list[StepRecord] = field(default_factory=list)
    final_feedback: Feedback | None = None
    failed: bool = False
    failure_reason: str | None = None

    def executed_path(self) -> list[tuple[float, float]]:
        path = [(self.start_pose.x, self.start_pose.y)]
        path.extend((s.pose.x, s.pose.y) for s in self.steps)
        return path


def _pose_json(p: Pose) -> dict:
    return {"x": p.x, "y": p.y, "yaw_deg": p.yaw_deg}


def _pose_from(obj: dict) -> Pose:
    return Pose(float(obj["x"]), float(obj["y"]), float(obj["yaw_deg"]))


def write_record(path, record: EpisodeRecord) -> None:
    """Atomic JSONL dump: header line, one line per step, trailer line."""
    lines = [json.dumps({
        "type": "header",
        "episode_id": record.episode_id,
        "mode": record.mode,
        "seed": record.seed,
        "config": record.config,
        "config_hash": record.config_hash,
        "start_pose": _pose_json(record.start_pose),
        "goal": list(record.goal),
        "instruction": record.instruction,
        "subtasks": record.subtasks,
        "subtask_hints": [list(p) for p in record.subtask_hints],
        "reference_path": [list(p) for p in record.reference_path],
        "max_steps": record.max_steps,
        "perturb_step": record.perturb_step,
    })]
    for s in record.steps:
        lines.append(json.dumps({
            "type": "step",
            "timestep": s.timestep,
            "pose": _pose_json(s.pose),
            "subtask_index": s.subtask_index,
            "perturbed": s.perturbed,
            "decision_space": s.decision_space,
            "chosen_id": s.chosen_id,
            "explanation": s.explanation,
            "feedback": s.feedback.to_json(),
        }))
    lines.append(json.dumps({
        "type": "end",
        "failed": record.failed,
        "failure_reason": record.failure_reason,
        "final_feedback": (record.final_feedback.to_json()
                           if record.final_feedback else None),
    }))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_record(path) -> EpisodeRecord:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = [json.loads(line) for line in fh if line.strip()]
    except ValueError as exc:
        raise InputError(f"{path}: not JSONL: {exc}") from exc
    if not raw or raw[0].get("type") != "header":
        raise InputError(f"{path}: not an episode record (missing header line)")
    h = raw[0]
    try:
        record = EpisodeRecord(
            episode_id=str(h["episode_id"]),
            mode=str(h["mode"]),
            seed=int(h["seed"]),
            config=h["config"],
            config_hash=str(h["config_hash"]),
            start_pose=_pose_from(h["start_pose"]),
            goal=(float(h["goal"][0]), float(h["goal"][1])),
            instruction=str(h["instruction"]),
            subtasks=[str(s) for s in h["subtasks"]],
            subtask_hints=[(float(p[0]), float(p[1])) for p in h["subtask_hints"]],
            reference_path=[(float(p[0]), float(p[1])) for p in h["reference_path"]],
            max_steps=int(h["max_steps"]),
            perturb_step=h.get("perturb_step"),
        )
        for obj in raw[1:]:
            if obj.get("type") == "step":
                record.steps.append(StepRecord(
                    timestep=int(obj["timestep"]),
                    pose=_pose_from(obj["pose"]),
                    subtask_index=int(obj["subtask_index"]),
                    perturbed=bool(obj["perturbed"]),
                    decision_space=obj["decision_space"],
                    chosen_id=int(obj["chosen_id"]),
                    explanation=str(obj["explanation"]),
                    feedback=Feedback.from_json(obj["feedback"]),
                ))
            elif obj.get("type") == "end":
                record.failed = bool(obj["failed"])
                record.failure_reason = obj.get("failure_reason")
                fb = obj.get("final_feedback")
                record.final_feedback = Feedback.from_json(fb) if fb else None
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed episode record: {exc}") from exc
    return record


def episode_seed_seq(seed: int, episode_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed),
                                   zlib.crc32(episode_id.encode("utf-8"))])


def backend_rng(seed: int, episode_id: str) -> np.random.Generator:
    """The per-episode stream reserved for stochastic backends; disjoint
    from the environment stream used for perturbations."""
    return np.random.default_rng(episode_seed_seq(seed, episode_id).spawn(2)[1])


def run_episode(world: SimWorld, episode: EpisodeSpec, backend: ModelBackend,
                cfg: EpisodeConfig, seed: int,
                advance_rule: str | None = None) -> EpisodeRecord:
    """Run the full closed loop for one episode and return its record.

    ``advance_rule`` picks how subtask completion is detected: "oracle"
    (advanced verdict + within reach of the subtask hint) or "token" (the
    feedback text carries the completion token); defaults by backend.
    """
    if not world.is_free(episode.start.x, episode.start.y):
        raise InputError(f"episode {episode.id}: start pose is not in free space")
    subtask_texts = decompose_instruction(episode.instruction)
    hints = list(episode.subtask_hints)
    if hints and len(hints) != len(subtask_texts):
        raise InputError(
            f"episode {episode.id}: {len(hints)} subtask hints for "
            f"{len(subtask_texts)} subtasks")
    max_steps = max(len(subtask_texts), cfg.min_steps)
    if advance_rule is None:
        advance_rule = "token" if backend.name == "remote" else "oracle"

    env_rng = np.random.default_rng(episode_seed_seq(seed, episode.id).spawn(2)[0])
    perturb_step = None
    if cfg.perturb_magnitude > 0.0 and max_steps >= 2:
        perturb_step = int(env_rng.integers(2, max_steps + 1))

    record = EpisodeRecord(
        episode_id=episode.id, mode=backend.name, seed=seed,
        config=cfg.to_json(), config_hash=config_hash(cfg),
        start_pose=Pose(episode.start.x, episode.start.y, episode.start.yaw_deg),
        goal=episode.goal, instruction=episode.instruction,
        subtasks=subtask_texts, subtask_hints=hints,
        reference_path=list(episode.reference_path),
        max_steps=max_steps, perturb_step=perturb_step,
    )

    pose = Pose(episode.start.x, episode.start.y, episode.start.yaw_deg)
    sub_i = 0
    feedback = initial_feedback()
    history: list[HistoryEntry] = []

    for t in range(1, max_steps + 1):
        perturbed = False
        if perturb_step == t:
            pose = inject_perturbation(world, pose, cfg.perturb_magnitude, env_rng)
            perturbed = True
        obs = render_panorama(world, pose, cfg.intrinsics, cfg.n_views)
        grid = perceive(obs, cfg.intrinsics, cfg.perception)
        skel = skeletonize(grid.cells)
        wps = generate_waypoints(skel, grid, cfg.waypoint)
        if not wps:
            wps = [make_fallback_waypoint()]
        space = build_decision_space(wps)

        hint = hints[sub_i] if sub_i < len(hints) else None
        ctx = StepContext(timestep=t, subtask_index=sub_i,
                          subtask_text=subtask_texts[sub_i], world=world,
                          pose=pose, target_hint=hint, goal=episode.goal,
                          view_headings=obs.headings)
        for w in space:
            if w.fallback:
                continue  # the fixed rotate-in-place text stands
            vi = nearest_view_index(w.heading_deg, obs.headings)
            w.description = backend.describer.describe(w, vi, obs, ctx)

        chosen_id = None
        for attempt in range(2):
            try:
                chosen_id, explanation = backend.chooser.choose(
                    episode.instruction, space, feedback, history, ctx)
                break
            except ProtocolError as exc:
                if attempt == 1:
                    record.failed = True
                    record.failure_reason = f"step {t}: {exc}"
        if record.failed:
            break
        chosen = next(w for w in space if w.id == chosen_id)

        new_pose = step(world, pose, to_action(chosen.distance_m, chosen.heading_deg))
        record.steps.append(StepRecord(
            timestep=t, pose=new_pose, subtask_index=sub_i, perturbed=perturbed,
            decision_space=decision_space_payload(space), chosen_id=chosen_id,
            explanation=explanation, feedback=feedback,
        ))
        history.append(HistoryEntry(t, chosen_id, explanation))

        fb_ctx = StepContext(timestep=t, subtask_index=sub_i,
                             subtask_text=subtask_texts[sub_i], world=world,
                             pose=new_pose, prev_pose=pose, target_hint=hint,
                             goal=episode.goal, view_headings=obs.headings)
        feedback = backend.feedback.compare(subtask_texts[sub_i], obs, None, fb_ctx)

        if sub_i < len(subtask_texts) - 1:
            if advance_rule == "token":
                advance = COMPLETION_TOKEN in feedback.text
            else:
                target = hint if hint is not None else episode.goal
                advance = (feedback.verdict is Verdict.ADVANCED and
                           _safe_geodesic(world, new_pose.position(), target)
                           < ADVANCE_RADIUS_M)
            if advance:
                sub_i += 1
        pose = new_pose

    record.final_feedback = feedback
    return record


def replay_episode(world: SimWorld, record: EpisodeRecord) -> EpisodeRecord:
    """Re-execute a stored record against the same world. All stochastic
    and model-driven quantities come from the record, so the resulting
    poses match the original bit for bit."""
    episode = EpisodeSpec(
        id=record.episode_id,
        start=Pose(record.start_pose.x, record.start_pose.y,
                   record.start_pose.yaw_deg),
        goal=record.goal,
        instruction=record.instruction,
        subtask_hints=list(record.subtask_hints),
        reference_path=list(record.reference_path),
    )
    cfg = EpisodeConfig.from_json(record.config)
    backend = make_replay_backend(record)
    rule = "token" if record.mode == "remote" else "oracle"
    out = run_episode(world, episode, backend, cfg, record.seed,
                      advance_rule=rule)
    # keep the original mode label so a faithful replay round-trips to the
    # same bytes on disk
    out.mode = record.mode
    return out


def find_episode(bundle: MapBundle, episode_id: str) -> EpisodeSpec:
    for ep in bundle.episodes:
        if ep.id == episode_id:
            return ep
    raise InputError(f"episode {episode_id!r} not found in bundle")

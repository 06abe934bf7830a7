"""Model backends: the three decision roles behind the navigation loop.

A backend bundles three providers:

* a *describer* that captions the view toward one candidate waypoint,
* a *chooser* that picks a waypoint id from the decision space,
* a *feedback* provider that judges whether the last move advanced the
  active subtask.

Four interchangeable families exist: scripted oracles that read the
simulator state (and a noise-injected variant for robustness studies), a
replay backend that re-issues choices from a stored episode record, and a
remote adapter that turns each role into an HTTP call against a hosted
model.  Oracle providers are pure functions of their arguments, so one
instance can serve many episodes concurrently.
"""

from __future__ import annotations

import base64
import enum
import json
import math
import os
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .angles import angular_difference
from .errors import InputError, ProtocolError, TransportError
from .perception import Observation
from .simenv import Pose, SimWorld, geodesic_distance, nearest_free_cell_center
from .waypoint import Waypoint, decision_space_payload, nearest_view_index

NO_FEEDBACK_TEXT = "no feedback yet"
COMPLETION_TOKEN = "SUBTASK_COMPLETE"


class Verdict(enum.Enum):
    ADVANCED = "advanced"
    DEVIATED = "deviated"
    UNCLEAR = "unclear"


@dataclass
class Feedback:
    verdict: Verdict
    text: str
    subtask_index: int

    def to_json(self) -> dict:
        return {"verdict": self.verdict.value, "text": self.text,
                "subtask_index": self.subtask_index}

    @staticmethod
    def from_json(obj: dict) -> "Feedback":
        return Feedback(Verdict(obj["verdict"]), str(obj["text"]),
                        int(obj["subtask_index"]))


def initial_feedback() -> Feedback:
    """Placeholder used on the very first step, before any move exists."""
    return Feedback(Verdict.UNCLEAR, NO_FEEDBACK_TEXT, 0)


@dataclass
class HistoryEntry:
    timestep: int
    chosen_id: int
    explanation: str


@dataclass
class StepContext:
    """Everything a provider may consult about the current step. Remote
    providers use none of it; oracles read the simulator through it."""

    timestep: int
    subtask_index: int
    subtask_text: str
    world: SimWorld | None = None
    pose: Pose | None = None
    prev_pose: Pose | None = None
    target_hint: tuple[float, float] | None = None
    goal: tuple[float, float] | None = None
    view_headings: list[float] = field(default_factory=list)


@dataclass
class ModelBackend:
    name: str
    describer: "object"
    chooser: "object"
    feedback: "object"
    needs_rgb: bool = False


# ---------------------------------------------------------------------------
# prompt templates

def load_prompt(name: str) -> str:
    """Load a versioned prompt template shipped with the package."""
    try:
        return resources.files("skelnav.prompts").joinpath(f"{name}.txt").read_text(
            encoding="utf-8")
    except FileNotFoundError as exc:
        raise InputError(f"unknown prompt template {name!r}") from exc


def format_history(history: list[HistoryEntry]) -> str:
    if not history:
        return "(none)"
    return "\n".join(f"step {h.timestep}: chose waypoint {h.chosen_id} - {h.explanation}"
                     for h in history)


def format_decision_space(space: list[Waypoint]) -> str:
    """Prompt-side rendering; rounds for readability (records keep full
    precision separately)."""
    lines = []
    for entry in decision_space_payload(space):
        shown = dict(entry)
        shown["distance_m"] = round(shown["distance_m"], 3)
        shown["heading_deg"] = round(shown["heading_deg"], 1)
        lines.append(json.dumps(shown))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# scripted oracle providers

def _waypoint_world_pos(w: Waypoint, pose: Pose) -> tuple[float, float]:
    th = math.radians(pose.yaw_deg + w.heading_deg)
    return (pose.x + w.distance_m * math.cos(th),
            pose.y + w.distance_m * math.sin(th))


def _safe_geodesic(world: SimWorld, a: tuple[float, float],
                   b: tuple[float, float]) -> float:
    """Geodesic where endpoints off the walkable raster snap to the
    nearest free cell first (perceived waypoints can overshoot a wall by a
    few smoothed-out centimetres)."""
    if not world.is_free(a[0], a[1]):
        a = nearest_free_cell_center(world, a[0], a[1])
    if not world.is_free(b[0], b[1]):
        b = nearest_free_cell_center(world, b[0], b[1])
    return geodesic_distance(world, a, b)


class OracleDescriber:
    """Captions from world geometry: nearest named object, else the region
    the target lands in, else open floor."""

    object_radius_m = 2.0

    def describe(self, waypoint: Waypoint, view_index: int,
                 obs: Observation | None, ctx: StepContext) -> str:
        if ctx.world is None or ctx.pose is None:
            raise InputError("oracle describer needs world and pose in the context")
        wx, wy = _waypoint_world_pos(waypoint, ctx.pose)
        where = "across open floor"
        best_d = self.object_radius_m
        for obj in ctx.world.objects:
            ox, oy = obj["pos"]
            d = math.hypot(ox - wx, oy - wy)
            if d < best_d:
                best_d = d
                where = f"toward the {obj['name']}"
        if where == "across open floor":
            for reg in ctx.world.regions:
                x0, y0, x1, y1 = reg["rect"]
                if x0 <= wx <= x1 and y0 <= wy <= y1:
                    where = f"into the {reg['name']}"
                    break
        return (f"{waypoint.distance_m:.1f} m at {waypoint.heading_deg:+.0f} deg, "
                f"{where}")


class OracleChooser:
    """Picks the waypoint whose position lies geodesically closest to the
    active subtask hint (the goal when no hint is set). Ties break toward
    the smaller id."""

    def choose(self, instruction: str, space: list[Waypoint], feedback: Feedback,
               history: list[HistoryEntry], ctx: StepContext) -> tuple[int, str]:
        if ctx.world is None or ctx.pose is None:
            raise InputError("oracle chooser needs world and pose in the context")
        if not space:
            raise InputError("decision space is empty")
        target = ctx.target_hint if ctx.target_hint is not None else ctx.goal
        if target is None:
            raise InputError("oracle chooser needs a subtask hint or goal")
        best_id, best_key = None, None
        for w in space:
            pos = _waypoint_world_pos(w, ctx.pose)
            d = _safe_geodesic(ctx.world, pos, target)
            key = (d, w.id)
            if best_key is None or key < best_key:
                best_key, best_id = key, w.id
        return best_id, f"waypoint {best_id} lies closest to the current subtask target"


class NoisyChooser:
    """Oracle chooser degraded by view quantisation: the more the best
    waypoint's bearing falls between panorama views, the likelier the
    choice slips to some other candidate. Fewer views, larger slips."""

    def __init__(self, noise_scale: float, rng: np.random.Generator):
        if noise_scale < 0:
            raise InputError("noise_scale must be non-negative")
        self._oracle = OracleChooser()
        self.noise_scale = noise_scale
        self.rng = rng

    def choose(self, instruction, space, feedback, history, ctx):
        best_id, explanation = self._oracle.choose(instruction, space, feedback,
                                                   history, ctx)
        if len(space) > 1 and ctx.view_headings:
            best = next(w for w in space if w.id == best_id)
            vi = nearest_view_index(best.heading_deg, ctx.view_headings)
            err = angular_difference(best.heading_deg, ctx.view_headings[vi])
            p = min(err / 40.0, 0.9) * self.noise_scale
            if self.rng.random() < p:
                others = [w.id for w in space if w.id != best_id]
                slipped = others[int(self.rng.integers(0, len(others)))]
                return slipped, (f"view ambiguity around waypoint {best_id} "
                                 f"led to waypoint {slipped}")
        return best_id, explanation


class OracleFeedback:
    """Compares geodesic distance to the active subtask target before and
    after the move. Strict decrease = advanced, strict increase =
    deviated, anything else (including unreachable targets) = unclear."""

    def compare(self, subtask_text: str, before: Observation | None,
                after: Observation | None, ctx: StepContext) -> Feedback:
        if ctx.world is None or ctx.pose is None or ctx.prev_pose is None:
            raise InputError("oracle feedback needs world and both poses")
        target = ctx.target_hint if ctx.target_hint is not None else ctx.goal
        if target is None:
            raise InputError("oracle feedback needs a subtask hint or goal")
        d0 = _safe_geodesic(ctx.world, ctx.prev_pose.position(), target)
        d1 = _safe_geodesic(ctx.world, ctx.pose.position(), target)
        if math.isinf(d0) or math.isinf(d1):
            return Feedback(Verdict.UNCLEAR, "subtask target is unreachable",
                            ctx.subtask_index)
        text = (f"distance to the subtask target went from {d0:.2f} m "
                f"to {d1:.2f} m")
        if d1 < d0:
            return Feedback(Verdict.ADVANCED, text, ctx.subtask_index)
        if d1 > d0:
            return Feedback(Verdict.DEVIATED, text, ctx.subtask_index)
        return Feedback(Verdict.UNCLEAR, text, ctx.subtask_index)


# ---------------------------------------------------------------------------
# replay providers

class ReplayDescriber:
    def __init__(self, record):
        self._by_step = {}
        for s in record.steps:
            self._by_step[s.timestep] = {e["id"]: e["description"]
                                         for e in s.decision_space}

    def describe(self, waypoint, view_index, obs, ctx):
        try:
            return self._by_step[ctx.timestep][waypoint.id]
        except KeyError as exc:
            raise ProtocolError(
                f"replay record has no description for step {ctx.timestep} "
                f"waypoint {waypoint.id}") from exc


class ReplayChooser:
    def __init__(self, record):
        self._by_step = {s.timestep: (s.chosen_id, s.explanation)
                         for s in record.steps}

    def choose(self, instruction, space, feedback, history, ctx):
        try:
            return self._by_step[ctx.timestep]
        except KeyError as exc:
            raise ProtocolError(f"replay record has no step {ctx.timestep}") from exc


class ReplayFeedback:
    """Feedback produced at the end of step t was stored on step t+1 (it
    is what the *next* decision saw), with the final one on the record."""

    def __init__(self, record):
        self._record = record
        self._by_step = {s.timestep: s.feedback for s in record.steps}

    def compare(self, subtask_text, before, after, ctx):
        nxt = self._by_step.get(ctx.timestep + 1)
        if nxt is not None:
            return nxt
        if self._record.final_feedback is not None:
            return self._record.final_feedback
        raise ProtocolError(f"replay record has no feedback after step {ctx.timestep}")


# ---------------------------------------------------------------------------
# remote adapter

@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    model: str = "default"
    api_key_env: str = "SKELNAV_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2


def encode_image(img: np.ndarray) -> dict:
    """Raw base64 payload for the synthetic endpoint: shape + bytes."""
    a = np.ascontiguousarray(img, dtype=np.uint8)
    return {"shape": list(a.shape),
            "data_b64": base64.b64encode(a.tobytes()).decode("ascii")}


def compose_feedback_image(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Side-by-side before/after montage with a thin white divider."""
    b = np.asarray(before)
    a = np.asarray(after)
    if b.shape != a.shape or b.ndim != 3 or b.shape[2] != 3:
        raise InputError(f"before/after shapes must match as (H, W, 3); "
                         f"got {b.shape} and {a.shape}")
    divider = np.full((b.shape[0], 4, 3), 255, dtype=np.uint8)
    return np.concatenate([b.astype(np.uint8), divider, a.astype(np.uint8)], axis=1)


def http_transport(cfg: RemoteConfig):
    """Default transport: POST the payload as JSON, return the reply dict.
    Retries transport-level failures (connection errors, non-2xx) with a
    short linear backoff."""
    import requests

    def send(payload: dict) -> dict:
        headers = {}
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(0.2 * attempt)
            try:
                resp = requests.post(cfg.endpoint, json=payload, headers=headers,
                                     timeout=cfg.timeout_s)
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code // 100 == 2:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"endpoint returned non-JSON body: {exc}") from exc
            last = TransportError(f"HTTP {resp.status_code} from {cfg.endpoint}")
        raise TransportError(f"remote endpoint unreachable: {last}")

    return send


def extract_json_object(text: str) -> dict:
    """Parse the reply as JSON, tolerating prose around one JSON object."""
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except ValueError:
        pass
    depth, start = 0, -1
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                try:
                    obj = json.loads(text[start:i + 1])
                except ValueError:
                    continue
                if isinstance(obj, dict):
                    return obj
    raise ProtocolError("reply does not contain a JSON object")


def parse_choice_reply(text: str, valid_ids: set[int]) -> tuple[int, str]:
    obj = extract_json_object(text)
    if "chosen_id" not in obj:
        raise ProtocolError("reply JSON lacks 'chosen_id'")
    try:
        chosen = int(obj["chosen_id"])
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"'chosen_id' is not an integer: {obj['chosen_id']!r}") from exc
    if chosen not in valid_ids:
        raise ProtocolError(f"chosen_id {chosen} is not in the decision space")
    return chosen, str(obj.get("explanation", ""))


def parse_feedback_reply(text: str, subtask_index: int) -> Feedback:
    upper = text.upper()
    verdict = Verdict.UNCLEAR
    best = len(text) + 1
    for v, token in ((Verdict.ADVANCED, "ADVANCED"), (Verdict.DEVIATED, "DEVIATED"),
                     (Verdict.UNCLEAR, "UNCLEAR")):
        i = upper.find(token)
        if i != -1 and i < best:
            best, verdict = i, v
    return Feedback(verdict, text.strip(), subtask_index)


class RemoteClient:
    def __init__(self, cfg: RemoteConfig, transport=None):
        self.cfg = cfg
        self.transport = transport if transport is not None else http_transport(cfg)

    def complete(self, prompt: str, images: list[np.ndarray] | None = None) -> str:
        payload = {"model": self.cfg.model, "prompt": prompt}
        if images:
            payload["images"] = [encode_image(im) for im in images]
        reply = self.transport(payload)
        if not isinstance(reply, dict) or "text" not in reply:
            raise ProtocolError("remote reply lacks a 'text' field")
        return str(reply["text"])


class RemoteDescriber:
    def __init__(self, client: RemoteClient):
        self.client = client
        self.template = load_prompt("directional_v1")

    def describe(self, waypoint, view_index, obs: Observation | None, ctx):
        prompt = self.template.format(distance_m=f"{waypoint.distance_m:.1f}",
                                      heading_deg=f"{waypoint.heading_deg:+.0f}")
        images = None
        if obs is not None and obs.rgb is not None:
            images = [obs.rgb[view_index]]
        return self.client.complete(prompt, images).strip()


class RemoteChooser:
    def __init__(self, client: RemoteClient):
        self.client = client
        self.template = load_prompt("decision_v1")

    def choose(self, instruction, space, feedback, history, ctx):
        prompt = self.template.format(
            instruction=instruction,
            decision_space=format_decision_space(space),
            feedback=feedback.text,
            history=format_history(history),
        )
        text = self.client.complete(prompt)
        return parse_choice_reply(text, {w.id for w in space})


class RemoteFeedback:
    def __init__(self, client: RemoteClient):
        self.client = client
        self.template = load_prompt("alignment_v1")

    def compare(self, subtask_text, before: Observation | None,
                after: Observation | None, ctx):
        prompt = self.template.format(subtask=subtask_text)
        images = None
        if (before is not None and after is not None
                and before.rgb is not None and after.rgb is not None):
            montage = compose_feedback_image(before.rgb[0], after.rgb[0])
            images = [montage]
        text = self.client.complete(prompt, images)
        return parse_feedback_reply(text, ctx.subtask_index)


# ---------------------------------------------------------------------------
# factories

def make_oracle_backend() -> ModelBackend:
    return ModelBackend(name="oracle", describer=OracleDescriber(),
                        chooser=OracleChooser(), feedback=OracleFeedback())


def make_noisy_backend(noise_scale: float, rng: np.random.Generator) -> ModelBackend:
    return ModelBackend(name="noisy", describer=OracleDescriber(),
                        chooser=NoisyChooser(noise_scale, rng),
                        feedback=OracleFeedback())


def make_replay_backend(record) -> ModelBackend:
    return ModelBackend(name="replay", describer=ReplayDescriber(record),
                        chooser=ReplayChooser(record),
                        feedback=ReplayFeedback(record))


def make_remote_backend(cfg: RemoteConfig, transport=None) -> ModelBackend:
    client = RemoteClient(cfg, transport)
    return ModelBackend(name="remote", describer=RemoteDescriber(client),
                        chooser=RemoteChooser(client),
                        feedback=RemoteFeedback(client), needs_rgb=True)

"""Append-only session logs: odometry, commands, actions, grasp contacts.

Sessions serialize to JSON Lines, one event per line, so a log can be
streamed while it is being written and diffed afterwards.  Replay pushes
the logged commands back through the simulator and reports any odometry
mismatch; a clean recording replays bit-exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import scene as sc

HEATMAP_DIMS = (4, 8, 8)  # four side faces, 8x8 patches each


class LogError(ValueError):
    pass


@dataclass(frozen=True)
class OdometrySample:
    tick: int
    agent_id: str
    pose: sc.Pose

    def to_record(self) -> dict:
        return {
            "t": self.tick,
            "kind": "odom",
            "agent": self.agent_id,
            "x": self.pose.x,
            "y": self.pose.y,
            "yaw": self.pose.yaw,
        }


@dataclass(frozen=True)
class GraspContactEvent:
    tick: int
    agent_id: str
    object_id: str
    patch: tuple[int, int, int]  # (face, u, v)

    def __post_init__(self):
        f, u, v = self.patch
        df, du, dv = HEATMAP_DIMS
        if not (0 <= f < df and 0 <= u < du and 0 <= v < dv):
            raise LogError(f"patch {self.patch} outside grid {HEATMAP_DIMS}")

    def to_record(self) -> dict:
        return {
            "t": self.tick,
            "kind": "contact",
            "agent": self.agent_id,
            "object": self.object_id,
            "patch": list(self.patch),
        }


@dataclass(frozen=True)
class CommandRecord:
    tick: int
    agent_id: str
    v: float
    omega: float

    def to_record(self) -> dict:
        return {"t": self.tick, "kind": "cmd", "agent": self.agent_id, "v": self.v, "omega": self.omega}


@dataclass
class SessionLog:
    session_id: str
    subject_id: str
    scene_hash: str
    records: list[dict] = field(default_factory=list)

    def last_tick(self) -> int:
        return self.records[-1]["t"] if self.records else -1

    def record(self, event) -> "SessionLog":
        rec = event.to_record() if hasattr(event, "to_record") else dict(event)
        if rec["t"] < self.last_tick():
            raise LogError(f"tick regression: {rec['t']} after {self.last_tick()}")
        self.records.append(rec)
        return self

    def by_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def to_jsonl(self) -> str:
        header = {
            "kind": "session",
            "t": 0,
            "session": self.session_id,
            "subject": self.subject_id,
            "scene_hash": self.scene_hash,
        }
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "SessionLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise LogError("empty session file")
        header = json.loads(lines[0])
        if header.get("kind") != "session":
            raise LogError("missing session header line")
        log = cls(header["session"], header["subject"], header["scene_hash"])
        for ln in lines[1:]:
            log.record(json.loads(ln))
        return log

    @classmethod
    def load(cls, path) -> "SessionLog":
        with open(path, encoding="utf-8") as f:
            return cls.from_jsonl(f.read())


class SessionRecorder:
    """Feeds simulator steps into a session log.

    Odometry is logged every tick an agent's pose changed, plus a 10 Hz
    keepalive while idle; commands are logged whenever non-zero so a replay
    can re-drive the simulation.
    """

    IDLE_SAMPLE_TICKS = 6

    def __init__(self, session: SessionLog):
        self.session = session
        self._last_pose: dict[str, sc.Pose] = {}

    def on_reset(self, scene: sc.SceneGraph) -> None:
        for agent in scene.agents():
            self._last_pose[agent.id] = agent.pose
            self.session.record(OdometrySample(scene.tick, agent.id, agent.pose))

    def on_step(self, commands, scene: sc.SceneGraph, events, prev_scene: sc.SceneGraph) -> None:
        t = scene.tick
        for cmd in sorted(commands, key=lambda c: c.agent_id):
            if cmd.v != 0.0 or cmd.omega != 0.0:
                self.session.record(CommandRecord(t, cmd.agent_id, cmd.v, cmd.omega))
        for ev in events:
            self.session.record(ev)
            if isinstance(ev, sc.ActionEvent) and ev.verb == "grasp" and ev.outcome == "ok":
                agent = prev_scene.entity(ev.agent_id)
                obj = prev_scene.entity(ev.target_id)
                patch = sc.grasp_contact_patch(agent, obj)
                self.session.record(GraspContactEvent(t, ev.agent_id, ev.target_id, patch))
        for agent in scene.agents():
            moved = self._last_pose.get(agent.id) != agent.pose
            if moved or t % self.IDLE_SAMPLE_TICKS == 0:
                self.session.record(OdometrySample(t, agent.id, agent.pose))
            self._last_pose[agent.id] = agent.pose


def footprint_export(session: SessionLog, agent_id: str) -> str:
    """CSV of (tick, x, y, yaw) odometry rows for one agent."""
    out = io.StringIO()
    out.write("tick,x,y,yaw\n")
    for r in session.by_kind("odom"):
        if r["agent"] == agent_id:
            out.write(f"{r['t']},{r['x']!r},{r['y']!r},{r['yaw']!r}\n")
    return out.getvalue()


@dataclass
class HeatMap:
    object_id: str
    dims: tuple[int, int, int] = HEATMAP_DIMS
    counts: np.ndarray | None = None
    values: np.ndarray | None = None  # set on averaged maps

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.dims, dtype=np.int64)
        if tuple(self.counts.shape) != tuple(self.dims):
            raise LogError(f"counts shape {self.counts.shape} != dims {self.dims}")
        if (self.counts < 0).any():
            raise LogError("negative patch count")

    def normalized(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        m = self.counts.max()
        if m == 0:
            return np.zeros(self.dims)
        return self.counts / m

    def to_dict(self) -> dict:
        d = {"object": self.object_id, "dims": list(self.dims), "counts": self.counts.flatten().tolist()}
        if self.values is not None:
            d["values"] = [round(float(v), 9) for v in self.values.flatten()]
        return d


def heatmap_accumulate(events: list[GraspContactEvent], object_id: str, dims=HEATMAP_DIMS) -> HeatMap:
    counts = np.zeros(dims, dtype=np.int64)
    for ev in events:
        if ev.object_id != object_id:
            raise LogError(f"event on {ev.object_id!r} mixed into map of {object_id!r}")
        f, u, v = ev.patch
        if not (0 <= f < dims[0] and 0 <= u < dims[1] and 0 <= v < dims[2]):
            raise LogError(f"patch {ev.patch} outside grid {dims}")
        counts[f, u, v] += 1
    return HeatMap(object_id, dims, counts)


def heatmap_average(maps: list[HeatMap]) -> HeatMap:
    """Normalize each subject's map to its own peak, then average per patch."""
    if not maps:
        raise LogError("cannot average zero heat maps")
    first = maps[0]
    for m in maps[1:]:
        if m.object_id != first.object_id or tuple(m.dims) != tuple(first.dims):
            raise LogError("heat map object/dims mismatch")
    stack = np.stack([m.normalized() for m in maps])
    total = np.sum([m.counts for m in maps], axis=0)
    return HeatMap(first.object_id, first.dims, counts=total, values=stack.mean(axis=0))


def contacts_from_session(session: SessionLog, object_id: str) -> list[GraspContactEvent]:
    out = []
    for r in session.by_kind("contact"):
        if r["object"] == object_id:
            out.append(GraspContactEvent(r["t"], r["agent"], r["object"], tuple(r["patch"])))
    return out


def replay(session: SessionLog, scene_document: str) -> tuple[sc.SceneGraph, list[dict]]:
    """Re-simulate a session from its commands; report odometry mismatches.

    The divergence report is empty iff every logged pose equals the
    re-simulated pose bit-for-bit.
    """
    if sc.document_hash(scene_document) != session.scene_hash:
        raise LogError("scene hash mismatch: log was recorded against a different document")
    scene = sc.load_scene(scene_document)

    by_tick: dict[int, dict[str, list[dict]]] = {}
    max_tick = 0
    for r in session.records:
        by_tick.setdefault(r["t"], {}).setdefault(r["kind"], []).append(r)
        max_tick = max(max_tick, r["t"])

    divergences: list[dict] = []

    def check_odom(t: int):
        for r in by_tick.get(t, {}).get("odom", []):
            agent = scene.entities.get(r["agent"])
            if agent is None:
                divergences.append({"t": t, "agent": r["agent"], "error": "missing agent"})
                continue
            actual = (agent.pose.x, agent.pose.y, agent.pose.yaw)
            expected = (r["x"], r["y"], r["yaw"])
            if actual != expected:
                divergences.append(
                    {"t": t, "agent": r["agent"], "expected": list(expected), "actual": list(actual)}
                )

    check_odom(0)
    for t in range(1, max_tick + 1):
        recs = by_tick.get(t, {})
        cmds = [sc.VelocityCommand(r["agent"], r["v"], r["omega"]) for r in recs.get("cmd", [])]
        actions = [
            sc.ActionRequest(r["agent"], r["verb"], r["target"])
            for r in recs.get("action", [])
        ]
        scene, _ = sc.step(scene, cmds, actions)
        check_odom(t)
    return scene, divergences

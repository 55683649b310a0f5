"""Deterministic fixed-timestep indoor scene simulation.

Entities are world-axis-aligned boxes with symbolic fluents.  Agents move by
velocity commands with swept collision against walls and closed doors;
grasping rigidly attaches objects; interactions flip fluents through
data-driven transition tables.  First-person sensing is a planar ray cast
returning depth, entity label, and surface normal per ray.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import AABB, Pose, ray_box_intersect, sweep_point_axis, wrap_angle

DT = 1.0 / 60.0
TICKS_PER_SECOND = 60
V_MAX = 2.0
OMEGA_MAX = math.pi
REACH_RADIUS = 1.2

AGENT_HALF_EXTENTS = (0.3, 0.3)
OBJECT_HALF_EXTENTS = (0.15, 0.15)

KINDS = ("wall", "door", "object", "agent")
VERBS = ("push_door", "twist_door", "press_button", "pour", "grasp", "release", "wave", "stretch")
UNTARGETED_VERBS = ("wave", "stretch")

FluentValue = bool | float | str


class SceneError(ValueError):
    """Malformed scene document or violated scene contract."""


@dataclass(frozen=True)
class Entity:
    id: str
    kind: str
    pose: Pose
    half_extents: tuple[float, float]
    fluents: dict[str, FluentValue] = field(default_factory=dict)
    fluent_ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    attached_to: str | None = None
    attach_offset: tuple[float, float, float] | None = None
    transitions: tuple[dict, ...] = ()

    def __post_init__(self):
        hx, hy = self.half_extents
        if hx <= 0.0 or hy <= 0.0:
            raise SceneError(f"entity {self.id!r}: half_extents must be positive")
        if self.kind not in KINDS:
            raise SceneError(f"entity {self.id!r}: unknown kind {self.kind!r}")
        if self.attached_to is not None and self.kind != "object":
            raise SceneError(f"entity {self.id!r}: only objects can be attached")
        for name, (lo, hi) in self.fluent_ranges.items():
            v = self.fluents.get(name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and not lo <= v <= hi:
                raise SceneError(f"entity {self.id!r}: fluent {name!r}={v} outside [{lo},{hi}]")

    def aabb(self) -> AABB:
        return AABB.centered(self.pose.x, self.pose.y, *self.half_extents)

    def fluent(self, name: str, default=None):
        return self.fluents.get(name, default)

    def with_fluents(self, **changes) -> "Entity":
        for name, v in changes.items():
            rng = self.fluent_ranges.get(name)
            if rng and isinstance(v, (int, float)) and not isinstance(v, bool):
                lo, hi = rng
                if not lo <= v <= hi:
                    raise SceneError(f"entity {self.id!r}: fluent {name!r}={v} outside [{lo},{hi}]")
        return replace(self, fluents={**self.fluents, **changes})

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "kind": self.kind,
            "pose": self.pose.to_dict(),
            "half_extents": list(self.half_extents),
            "fluents": dict(sorted(self.fluents.items())),
        }
        if self.attached_to is not None:
            d["attached_to"] = self.attached_to
        return d


@dataclass(frozen=True)
class VelocityCommand:
    """Forward speed and yaw rate for one agent, clamped to the actuator limits."""

    agent_id: str
    v: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", max(-V_MAX, min(V_MAX, float(self.v))))
        object.__setattr__(self, "omega", max(-OMEGA_MAX, min(OMEGA_MAX, float(self.omega))))


@dataclass(frozen=True)
class ActionRequest:
    agent_id: str
    verb: str
    target_id: str | None = None

    def __post_init__(self):
        if self.verb not in VERBS:
            raise SceneError(f"unknown verb {self.verb!r}")
        if self.target_id is None and self.verb not in UNTARGETED_VERBS:
            raise SceneError(f"verb {self.verb!r} requires a target")


@dataclass(frozen=True)
class ActionEvent:
    tick: int
    agent_id: str
    verb: str
    target_id: str | None
    outcome: str  # ok | blocked | out_of_range

    def to_record(self) -> dict:
        return {
            "t": self.tick,
            "kind": "action",
            "agent": self.agent_id,
            "verb": self.verb,
            "target": self.target_id,
            "outcome": self.outcome,
        }


@dataclass(frozen=True)
class CollisionEvent:
    tick: int
    agent_id: str
    entity_id: str

    def to_record(self) -> dict:
        return {"t": self.tick, "kind": "collision", "agent": self.agent_id, "entity": self.entity_id}


@dataclass(frozen=True)
class DepthScan:
    n_rays: int
    fov: float
    depths: tuple[float, ...]
    labels: tuple[str | None, ...]
    normals: tuple[tuple[float, float] | None, ...]

    def to_dict(self) -> dict:
        return {
            "n_rays": self.n_rays,
            "fov": self.fov,
            "depths": [None if math.isinf(d) else d for d in self.depths],
            "labels": list(self.labels),
            "normals": [list(n) if n else None for n in self.normals],
        }


@dataclass(frozen=True)
class SceneGraph:
    entities: dict[str, Entity]
    tick: int = 0
    rng_seed: int = 0
    cell_size: float = 1.0

    @property
    def time(self) -> float:
        return self.tick / TICKS_PER_SECOND

    def entity(self, eid: str) -> Entity:
        try:
            return self.entities[eid]
        except KeyError:
            raise SceneError(f"unknown entity {eid!r}") from None

    def agents(self) -> list[Entity]:
        return [e for e in self.sorted_entities() if e.kind == "agent"]

    def objects(self) -> list[Entity]:
        return [e for e in self.sorted_entities() if e.kind == "object"]

    def sorted_entities(self) -> list[Entity]:
        return [self.entities[k] for k in sorted(self.entities)]

    def blocking_boxes(self) -> list[tuple[str, AABB]]:
        """Walls plus closed doors, sorted by id for deterministic tie-breaks."""
        out = []
        for e in self.sorted_entities():
            if e.kind == "wall" or (e.kind == "door" and not e.fluent("open", False)):
                out.append((e.id, e.aabb()))
        return out

    def held_object(self, agent_id: str) -> Entity | None:
        for e in self.sorted_entities():
            if e.kind == "object" and e.attached_to == agent_id:
                return e
        return None

    def with_entity(self, entity: Entity) -> "SceneGraph":
        ents = dict(self.entities)
        ents[entity.id] = entity
        return replace(self, entities=ents)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "time": self.time,
            "rng_seed": self.rng_seed,
            "cell_size": self.cell_size,
            "entities": [e.to_dict() for e in self.sorted_entities()],
        }

    def bounds(self) -> AABB | None:
        boxes = [e.aabb() for e in self.entities.values()]
        if not boxes:
            return None
        return AABB(
            min(b.x0 for b in boxes),
            min(b.y0 for b in boxes),
            max(b.x1 for b in boxes),
            max(b.y1 for b in boxes),
        )


def document_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- loading

ASCII_LEGEND = set("#.DAG ") | set("abcdefghijklmnopqrstuvwxyz")


def load_scene(document: str) -> SceneGraph:
    """Build a scene from a JSON document or a bare ASCII grid map."""
    text = document.strip()
    if text.startswith("{"):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SceneError(f"scene JSON parse error at line {exc.lineno}: {exc.msg}") from exc
        return _load_json(doc)
    return _load_json({"ascii": text.splitlines()})


def _load_json(doc: dict) -> SceneGraph:
    if not isinstance(doc, dict):
        raise SceneError("scene document root must be an object")
    cell = float(doc.get("cell_size", 1.0))
    if cell <= 0.0:
        raise SceneError("cell_size must be positive")
    entities: dict[str, Entity] = {}

    def add(e: Entity):
        if e.id in entities:
            raise SceneError(f"duplicate entity id {e.id!r}")
        entities[e.id] = e

    rows = doc.get("ascii")
    if rows is not None:
        for e in _entities_from_ascii(rows, cell):
            add(e)
    for i, spec in enumerate(doc.get("entities", [])):
        try:
            add(_entity_from_dict(spec))
        except SceneError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneError(f"entities[{i}]: {exc}") from exc

    scene = SceneGraph(entities=entities, tick=0, rng_seed=int(doc.get("rng_seed", 0)), cell_size=cell)
    _check_static_overlap(scene)
    return scene


def _entities_from_ascii(rows: list[str], cell: float):
    n_agents = 0
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch not in ASCII_LEGEND:
                raise SceneError(f"ascii map row {r} col {c}: unknown char {ch!r}")
            cx, cy = (c + 0.5) * cell, (r + 0.5) * cell
            if ch == "#":
                yield Entity(f"wall_{r}_{c}", "wall", Pose(cx, cy), (cell / 2, cell / 2))
            elif ch == "D":
                yield Entity(
                    f"door_{r}_{c}",
                    "door",
                    Pose(cx, cy),
                    (cell / 2, cell / 2),
                    fluents={"angle": 0.0, "open": False},
                    fluent_ranges={"angle": (0.0, math.pi / 2)},
                )
            elif ch == "A":
                n_agents += 1
                yield Entity(f"agent{n_agents}", "agent", Pose(cx, cy), AGENT_HALF_EXTENTS)
            elif ch == "G":
                yield Entity("goal", "object", Pose(cx, cy), (cell / 4, cell / 4), fluents={"goal": True})
            elif ch.islower():
                yield Entity(ch, "object", Pose(cx, cy), OBJECT_HALF_EXTENTS)


def _entity_from_dict(spec: dict) -> Entity:
    fluents = dict(spec.get("fluents", {}))
    ranges = {k: (float(v[0]), float(v[1])) for k, v in spec.get("fluent_ranges", {}).items()}
    kind = spec["kind"]
    if kind == "door":
        fluents.setdefault("angle", 0.0)
        fluents.setdefault("open", False)
        ranges.setdefault("angle", (0.0, math.pi / 2))
    he = spec.get("half_extents")
    if he is None:
        he = AGENT_HALF_EXTENTS if kind == "agent" else OBJECT_HALF_EXTENTS
    return Entity(
        id=str(spec["id"]),
        kind=kind,
        pose=Pose.from_dict(spec["pose"]),
        half_extents=(float(he[0]), float(he[1])),
        fluents=fluents,
        fluent_ranges=ranges,
        attached_to=spec.get("attached_to"),
        transitions=tuple(spec.get("transitions", [])),
    )


def _check_static_overlap(scene: SceneGraph):
    statics = [e for e in scene.sorted_entities() if e.kind in ("wall", "door")]
    for i, a in enumerate(statics):
        for b in statics[i + 1 :]:
            if a.aabb().overlaps(b.aabb(), eps=1e-9):
                raise SceneError(f"static overlap between {a.id!r} and {b.id!r}")
    blocking = scene.blocking_boxes()
    for agent in scene.agents():
        for eid, box in blocking:
            if agent.aabb().overlaps(box, eps=1e-9):
                raise SceneError(f"agent {agent.id!r} spawned inside {eid!r}")


# ---------------------------------------------------------------- stepping

def step(
    scene: SceneGraph,
    commands: list[VelocityCommand] = (),
    actions: list[ActionRequest] = (),
) -> tuple[SceneGraph, list]:
    """Advance one fixed 1/60 s tick; pure function of its inputs."""
    seen: set[str] = set()
    for cmd in commands:
        if cmd.agent_id in seen:
            raise SceneError(f"duplicate command for agent {cmd.agent_id!r}")
        seen.add(cmd.agent_id)
        if scene.entity(cmd.agent_id).kind != "agent":
            raise SceneError(f"{cmd.agent_id!r} is not an agent")

    tick = scene.tick + 1
    events: list = []
    entities = dict(scene.entities)
    blocking = scene.blocking_boxes()

    for cmd in sorted(commands, key=lambda c: c.agent_id):
        agent = entities[cmd.agent_id]
        hx, hy = agent.half_extents
        yaw = wrap_angle(agent.pose.yaw + cmd.omega * DT)
        dx = cmd.v * DT * math.cos(yaw)
        dy = cmd.v * DT * math.sin(yaw)
        expanded = [(eid, box.expanded(hx, hy)) for eid, box in blocking]
        x, y = agent.pose.x, agent.pose.y
        adx, hit_x = sweep_point_axis(x, y, dx, expanded, axis=0)
        x += adx
        ady, hit_y = sweep_point_axis(y, x, dy, expanded, axis=1)
        y += ady
        hit = hit_x if hit_x is not None else hit_y
        if hit is not None:
            events.append(CollisionEvent(tick, agent.id, hit))
        moved = replace(agent, pose=Pose(x, y, yaw))
        entities[agent.id] = moved
        for obj in scene.sorted_entities():
            if obj.kind == "object" and obj.attached_to == agent.id:
                entities[obj.id] = replace(obj, pose=moved.pose.transform(*obj.attach_offset))

    out = replace(scene, entities=entities, tick=tick)
    for req in actions:
        out, ev = _apply_action(out, req)
        events.append(ev)
    return out, events


def grasp_contact_patch(agent: Entity, obj: Entity, grid_u: int = 8, grid_v: int = 8) -> tuple[int, int, int]:
    """Contact patch on the object's 4 side faces (face, u, v).

    Face picked by approach direction in the object frame; u from the lateral
    offset along that face; v fixed mid-height (the sim is planar).
    """
    lx, ly, _ = obj.pose.inverse_transform(agent.pose)
    hx, hy = obj.half_extents
    if abs(lx) * hy >= abs(ly) * hx:
        face = 0 if lx >= 0 else 2
        frac = (ly + hy) / (2 * hy)
    else:
        face = 1 if ly >= 0 else 3
        frac = (lx + hx) / (2 * hx)
    u = min(grid_u - 1, max(0, int(frac * grid_u)))
    return face, u, grid_v // 2


def grasp_attach(scene: SceneGraph, agent_id: str, object_id: str) -> SceneGraph:
    agent = scene.entity(agent_id)
    obj = scene.entity(object_id)
    if agent.kind != "agent":
        raise SceneError(f"{agent_id!r} is not an agent")
    if obj.kind != "object":
        raise SceneError(f"{object_id!r} is not an object")
    if obj.attached_to == agent_id:
        return scene
    if obj.attached_to is not None:
        raise SceneError(f"object {object_id!r} already attached to {obj.attached_to!r}")
    if scene.held_object(agent_id) is not None:
        raise SceneError("hands full")
    if _distance(agent, obj) > REACH_RADIUS:
        raise SceneError(f"object {object_id!r} out of reach")
    offset = agent.pose.inverse_transform(obj.pose)
    return scene.with_entity(replace(obj, attached_to=agent_id, attach_offset=offset))


def release(scene: SceneGraph, agent_id: str) -> SceneGraph:
    obj = scene.held_object(agent_id)
    if obj is None:
        raise SceneError(f"agent {agent_id!r} holds nothing")
    return scene.with_entity(replace(obj, attached_to=None, attach_offset=None))


def _distance(a: Entity, b: Entity) -> float:
    return math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)


def interact(scene: SceneGraph, request: ActionRequest) -> tuple[SceneGraph, ActionEvent]:
    """Apply one action request; out-of-range and blocked leave the scene unchanged."""
    agent = scene.entity(request.agent_id)
    if agent.kind != "agent":
        raise SceneError(f"{request.agent_id!r} is not an agent")
    tick = scene.tick

    def ev(outcome: str) -> ActionEvent:
        return ActionEvent(tick, request.agent_id, request.verb, request.target_id, outcome)

    if request.verb in UNTARGETED_VERBS:
        return scene, ev("ok")
    if request.verb == "release":
        if scene.held_object(request.agent_id) is None:
            return scene, ev("blocked")
        return release(scene, request.agent_id), ev("ok")

    target = scene.entity(request.target_id)
    if _distance(agent, target) > REACH_RADIUS:
        return scene, ev("out_of_range")

    if request.verb == "grasp":
        try:
            return grasp_attach(scene, request.agent_id, request.target_id), ev("ok")
        except SceneError:
            return scene, ev("blocked")

    # data-driven transitions declared on the target take precedence
    for tr in target.transitions:
        if tr.get("verb") != request.verb:
            continue
        if tr.get("target_kind", target.kind) != target.kind:
            continue
        pre = tr.get("pre", {})
        if all(target.fluent(k) == v for k, v in pre.items()):
            return scene.with_entity(target.with_fluents(**tr.get("post", {}))), ev("ok")

    if request.verb in ("push_door", "twist_door"):
        if target.kind != "door":
            raise SceneError(f"verb {request.verb!r} inapplicable to kind {target.kind!r}")
        if request.verb == "push_door" and target.fluent("latched", False):
            return scene, ev("blocked")
        if target.fluent("open", False):
            return scene, ev("ok")
        return scene.with_entity(target.with_fluents(open=True, angle=math.pi / 2)), ev("ok")

    if request.verb == "press_button":
        if target.kind != "object":
            raise SceneError(f"verb 'press_button' inapplicable to kind {target.kind!r}")
        return scene.with_entity(target.with_fluents(on=not target.fluent("on", False))), ev("ok")

    if request.verb == "pour":
        held = scene.held_object(request.agent_id)
        if held is None:
            return scene, ev("blocked")
        contents = {k: True for k, v in held.fluents.items() if k.startswith("filled") and v}
        if not contents:
            return scene, ev("blocked")
        if target.kind != "object":
            raise SceneError(f"verb 'pour' inapplicable to kind {target.kind!r}")
        return scene.with_entity(target.with_fluents(**contents)), ev("ok")

    raise SceneError(f"unhandled verb {request.verb!r}")


def _apply_action(scene: SceneGraph, request: ActionRequest) -> tuple[SceneGraph, ActionEvent]:
    try:
        return interact(scene, request)
    except SceneError:
        ev = ActionEvent(scene.tick, request.agent_id, request.verb, request.target_id, "blocked")
        return scene, ev


# ---------------------------------------------------------------- sensing

def render_first_person(scene: SceneGraph, agent_id: str, n_rays: int, fov: float) -> DepthScan:
    """Planar depth/label/normal scan from an agent's body surface.

    Ray i points at yaw - fov/2 + i*fov/(n_rays-1); each ray reports the
    nearest box hit (ties by entity id ascending), its label, and the
    outward face normal.  Open doors are swung aside and invisible.
    """
    if n_rays < 1:
        raise SceneError("n_rays must be >= 1")
    if not 0.0 <= fov <= 2 * math.pi:
        raise SceneError("fov must be in [0, 2*pi]")
    agent = scene.entity(agent_id)
    if agent.kind != "agent":
        raise SceneError(f"{agent_id!r} is not an agent")
    ox, oy = agent.pose.x, agent.pose.y
    body = agent.half_extents[0]

    ids: list[str] = []
    boxes: list[AABB] = []
    for e in scene.sorted_entities():
        if e.id == agent_id:
            continue
        if e.kind == "door" and e.fluent("open", False):
            continue  # swung aside, neither blocks nor occludes
        ids.append(e.id)
        boxes.append(e.aabb())

    if n_rays == 1:
        angles = np.array([agent.pose.yaw])
    else:
        angles = agent.pose.yaw - fov / 2 + np.arange(n_rays) * (fov / (n_rays - 1))
    if not boxes:
        return DepthScan(n_rays, fov, (math.inf,) * n_rays, (None,) * n_rays, (None,) * n_rays)

    dx = np.cos(angles)[:, None]  # [rays, 1]
    dy = np.sin(angles)[:, None]
    x0 = np.array([b.x0 for b in boxes])[None, :]  # [1, boxes]
    x1 = np.array([b.x1 for b in boxes])[None, :]
    y0 = np.array([b.y0 for b in boxes])[None, :]
    y1 = np.array([b.y1 for b in boxes])[None, :]

    with np.errstate(divide="ignore", invalid="ignore"):
        def slab(o, d, lo, hi):
            inv = 1.0 / d
            t_lo, t_hi = (lo - o) * inv, (hi - o) * inv
            t_in = np.minimum(t_lo, t_hi)
            t_out = np.maximum(t_lo, t_hi)
            inside = (lo <= o) & (o <= hi)
            zero = d == 0.0
            t_in = np.where(zero, np.where(inside, -np.inf, np.inf), t_in)
            t_out = np.where(zero, np.where(inside, np.inf, -np.inf), t_out)
            return t_in, t_out

        tx_in, tx_out = slab(ox, dx, x0, x1)
        ty_in, ty_out = slab(oy, dy, y0, y1)

    t_enter = np.maximum(tx_in, ty_in)
    t_exit = np.minimum(tx_out, ty_out)
    hit = (t_exit >= t_enter) & (t_exit >= 0.0)
    t = np.where(t_enter >= 0.0, t_enter, t_exit)
    t = np.where(hit, t, np.inf)
    best = np.argmin(t, axis=1)  # first minimum = lowest entity id on ties
    rows = np.arange(n_rays)
    best_t = t[rows, best]

    # slab that produced the relevant t decides the outward normal:
    # entering faces the ray (-sign(d)), exiting points along it (+sign(d))
    use_exit = t_enter[rows, best] < 0.0
    x_face = np.where(
        use_exit,
        tx_out[rows, best] <= ty_out[rows, best],
        tx_in[rows, best] >= ty_in[rows, best],
    )
    orient = np.where(use_exit, 1.0, -1.0)
    nx = np.where(x_face, orient * np.sign(dx[:, 0]), 0.0)
    ny = np.where(x_face, 0.0, orient * np.sign(dy[:, 0]))

    depths, labels, normals = [], [], []
    for i in range(n_rays):
        if not math.isfinite(best_t[i]):
            depths.append(math.inf)
            labels.append(None)
            normals.append(None)
        else:
            depths.append(max(0.0, float(best_t[i]) - body))
            labels.append(ids[best[i]])
            normals.append((float(nx[i]), float(ny[i])))
    return DepthScan(n_rays, fov, tuple(depths), tuple(labels), tuple(normals))


# ---------------------------------------------------------------- occupancy

@dataclass(frozen=True)
class OccupancyGrid:
    origin: tuple[float, float]
    resolution: float
    blocked: np.ndarray  # bool [rows, cols]

    @property
    def shape(self) -> tuple[int, int]:
        return self.blocked.shape

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((y - self.origin[1]) / self.resolution)),
            int(math.floor((x - self.origin[0]) / self.resolution)),
        )

    def in_bounds(self, row: int, col: int) -> bool:
        rows, cols = self.blocked.shape
        return 0 <= row < rows and 0 <= col < cols

    def is_free(self, row: int, col: int) -> bool:
        return self.in_bounds(row, col) and not bool(self.blocked[row, col])

    def free_cells(self) -> list[tuple[int, int]]:
        rows, cols = np.where(~self.blocked)
        return list(zip(rows.tolist(), cols.tolist()))


def occupancy_grid(scene: SceneGraph, resolution: float) -> OccupancyGrid:
    """Rasterize walls and closed doors; a cell is blocked iff it overlaps one."""
    if resolution <= 0.0:
        raise SceneError("resolution must be positive")
    bounds = scene.bounds()
    if bounds is None:
        return OccupancyGrid((0.0, 0.0), resolution, np.zeros((0, 0), dtype=bool))
    x0 = math.floor(bounds.x0 / resolution) * resolution
    y0 = math.floor(bounds.y0 / resolution) * resolution
    cols = max(1, math.ceil((bounds.x1 - x0) / resolution - 1e-9))
    rows = max(1, math.ceil((bounds.y1 - y0) / resolution - 1e-9))
    blocked = np.zeros((rows, cols), dtype=bool)
    boxes = [box for _, box in scene.blocking_boxes()]
    for r in range(rows):
        cy0, cy1 = y0 + r * resolution, y0 + (r + 1) * resolution
        for c in range(cols):
            cx0, cx1 = x0 + c * resolution, x0 + (c + 1) * resolution
            cell = AABB(cx0, cy0, cx1, cy1)
            if any(cell.overlaps(b, eps=1e-9) for b in boxes):
                blocked[r, c] = True
    return OccupancyGrid((x0, y0), resolution, blocked)

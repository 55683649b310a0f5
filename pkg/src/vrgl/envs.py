"""Episodic task environments over the scene simulator.

MazeEnv is the corridor navigation task with one-shot color-zone rewards;
GraspEnv is a small reach-and-grasp grid.  Both export to explicit GridMDPs
for planning and reward inference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import scene as sc
from .geometry import AABB
from .mdp import ACTION_DELTAS, ACTIONS_4, ACTIONS_8, GridMDP, Trajectory, grid_mdp_from_occupancy

ZONE_ORDER = ("red", "yellow", "green", "blue")
DEFAULT_ZONE_REWARDS = {"red": 0.1, "yellow": 0.25, "green": 0.5, "blue": 1.0}
COLLISION_PENALTY = -0.1
STEP_PENALTY = -0.01
MAZE_STEP_LIMIT = 500
GRASP_STEP_LIMIT = 100
RAY_CLIP = 5.0
CONTINUOUS_SUBSTEPS = 6  # 0.1 s of sim per env step


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class Zone:
    name: str
    box: AABB
    reward: float


class RewardZones:
    """Ordered reward regions; the canonical colors must increase in value."""

    def __init__(self, zones: list[Zone]):
        self.zones = list(zones)
        by_name = {z.name: z.reward for z in zones}
        ordered = [by_name[n] for n in ZONE_ORDER if n in by_name]
        if any(b <= a for a, b in zip(ordered, ordered[1:])):
            raise EnvError(f"zone rewards must strictly increase {'<'.join(ZONE_ORDER)}: {by_name}")

    @classmethod
    def from_config(cls, entries: list[dict]) -> "RewardZones":
        zones = []
        for e in entries:
            x0, y0, x1, y1 = e["box"]
            reward = float(e.get("reward", DEFAULT_ZONE_REWARDS.get(e["name"], 0.0)))
            zones.append(Zone(str(e["name"]), AABB(x0, y0, x1, y1), reward))
        return cls(zones)

    def zone_at(self, x: float, y: float) -> Zone | None:
        for z in self.zones:
            if z.box.contains_point(x, y):
                return z
        return None

    def goal_zone(self) -> Zone | None:
        for z in self.zones:
            if z.name == "blue":
                return z
        return None

    def __iter__(self):
        return iter(self.zones)

    def __len__(self):
        return len(self.zones)


@dataclass
class StepResult:
    observation: object
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class MazeEnv:
    """Navigation through a walled scene toward the goal box.

    Discrete modes hop between free grid cells; the continuous mode drives
    the simulator with (v, omega) commands.  Zone rewards are granted once
    per episode on first entry; wall contact costs the collision penalty.
    """

    def __init__(
        self,
        scene_document: str,
        zones: RewardZones | None = None,
        obs: str = "features",
        actions: str = "discrete4",
        step_limit: int = MAZE_STEP_LIMIT,
        resolution: float = 1.0,
        depth_rays: int = 32,
    ):
        if actions not in ("discrete4", "discrete8", "continuous"):
            raise EnvError(f"unknown action mode {actions!r}")
        if obs not in ("features", "depth"):
            raise EnvError(f"unknown observation mode {obs!r}")
        self.document = scene_document
        self.base_scene = sc.load_scene(scene_document)
        agents = self.base_scene.agents()
        if not agents:
            raise EnvError("scene has no agent spawn")
        self.agent_id = agents[0].id
        self.spawn = agents[0].pose
        self.zones = zones or RewardZones([])
        goal_zone = self.zones.goal_zone()
        goal_entity = self.base_scene.entities.get("goal")
        if goal_zone is not None:
            self.goal_box = goal_zone.box
        elif goal_entity is not None:
            self.goal_box = goal_entity.aabb()
        else:
            raise EnvError("scene has no goal marker and no blue zone")
        self.obs_mode = obs
        self.action_mode = actions
        self.step_limit = step_limit
        self.resolution = resolution
        self.depth_rays = depth_rays
        self.grid = sc.occupancy_grid(self.base_scene, resolution)
        if not self.grid.free_cells():
            raise EnvError("no free cells at this resolution")
        self._scale = max(self.grid.shape[0], self.grid.shape[1]) * resolution
        self.action_names = (
            ACTIONS_8 if actions == "discrete8" else ACTIONS_4 if actions == "discrete4" else None
        )
        self._scene: sc.SceneGraph | None = None
        self._done = True
        self.episode_return = 0.0
        # discrete modes never mutate the static scene, so scans are cacheable
        self._obs_cache: dict[tuple[float, float, float], object] = {}

    # -- gym-style surface ------------------------------------------------
    @property
    def n_actions(self) -> int:
        if self.action_names is None:
            raise EnvError("continuous environment has no discrete action count")
        return len(self.action_names)

    @property
    def action_bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((-sc.V_MAX, sc.V_MAX), (-sc.OMEGA_MAX, sc.OMEGA_MAX))

    @property
    def observation_dim(self) -> int:
        return 14 if self.obs_mode == "features" else self.depth_rays

    def reset(self, seed: int | None = None):
        self.seed = seed
        self._scene = self.base_scene
        self._steps = 0
        self._entered: set[str] = set()
        start_zone = self.zones.zone_at(self.spawn.x, self.spawn.y)
        if start_zone is not None:
            self._entered.add(start_zone.name)
        self._done = False
        self.episode_return = 0.0
        return self._observe()

    def state(self) -> tuple[int, int]:
        agent = self._scene.entity(self.agent_id)
        return self.grid.world_to_cell(agent.pose.x, agent.pose.y)

    def step(self, action) -> StepResult:
        if self._done:
            raise EnvError("episode finished; call reset()")
        if self.action_mode == "continuous":
            collided = self._step_continuous(action)
        else:
            collided = self._step_discrete(int(action))
        self._steps += 1
        agent = self._scene.entity(self.agent_id)
        reward = STEP_PENALTY
        if collided:
            reward += COLLISION_PENALTY
        zone = self.zones.zone_at(agent.pose.x, agent.pose.y)
        zone_name = zone.name if zone else None
        if zone is not None and zone.name not in self._entered:
            self._entered.add(zone.name)
            reward += zone.reward
        success = self.goal_box.contains_point(agent.pose.x, agent.pose.y)
        done = success or self._steps >= self.step_limit
        self._done = done
        self.episode_return += reward
        info = {"collision": collided, "zone": zone_name, "success": success}
        return StepResult(self._observe(), reward, done, info)

    # -- dynamics ----------------------------------------------------------
    def _step_discrete(self, action: int) -> bool:
        if not 0 <= action < len(self.action_names):
            raise EnvError(f"action {action} out of range")
        name = self.action_names[action]
        dr, dc = ACTION_DELTAS[name]
        row, col = self.state()
        target = (row + dr, col + dc)
        blocked = not self.grid.is_free(*target)
        if name in ("NE", "NW", "SE", "SW") and not blocked:
            blocked = not (self.grid.is_free(row + dr, col) and self.grid.is_free(row, col + dc))
        yaw = math.atan2(dr, dc)  # rows grow along +y
        if blocked:
            nx, ny = self.grid.cell_center(row, col)
        else:
            nx, ny = self.grid.cell_center(*target)
        agent = self._scene.entity(self.agent_id)
        self._scene = self._scene.with_entity(replace(agent, pose=sc.Pose(nx, ny, yaw)))
        return blocked

    def _step_continuous(self, action) -> bool:
        v, omega = float(action[0]), float(action[1])
        collided = False
        for _ in range(CONTINUOUS_SUBSTEPS):
            self._scene, events = sc.step(self._scene, [sc.VelocityCommand(self.agent_id, v, omega)])
            collided = collided or any(isinstance(e, sc.CollisionEvent) for e in events)
        return collided

    # -- observations -------------------------------------------------------
    def _observe(self):
        agent = self._scene.entity(self.agent_id)
        if self.action_mode != "continuous":
            key = (agent.pose.x, agent.pose.y, agent.pose.yaw)
            cached = self._obs_cache.get(key)
            if cached is None:
                cached = self._compute_observation(agent)
                self._obs_cache[key] = cached
            return cached
        return self._compute_observation(agent)

    def _compute_observation(self, agent):
        if self.obs_mode == "depth":
            scan = sc.render_first_person(self._scene, self.agent_id, self.depth_rays, math.pi / 2)
            return np.clip(np.array(scan.depths), 0.0, RAY_CLIP) / RAY_CLIP
        gx = (self.goal_box.x0 + self.goal_box.x1) / 2
        gy = (self.goal_box.y0 + self.goal_box.y1) / 2
        scan = sc.render_first_person(self._scene, self.agent_id, 8, 2 * math.pi * 7 / 8)
        rays = np.clip(np.array(scan.depths), 0.0, RAY_CLIP) / RAY_CLIP
        s = self._scale
        return np.concatenate(
            [
                [
                    agent.pose.x / s,
                    agent.pose.y / s,
                    math.cos(agent.pose.yaw),
                    math.sin(agent.pose.yaw),
                    (gx - agent.pose.x) / s,
                    (gy - agent.pose.y) / s,
                ],
                rays,
            ]
        )


class GraspEnv:
    """Reach-and-grasp on an open grid: move next to the object, then grasp."""

    GRASP = "grasp"

    def __init__(
        self,
        size: int = 5,
        object_cell: tuple[int, int] | None = None,
        start_cell: tuple[int, int] = (0, 0),
        step_limit: int = GRASP_STEP_LIMIT,
        success_reward: float = 1.0,
    ):
        if size < 3:
            raise EnvError("grid size must be >= 3")
        self.size = size
        self.object_cell = object_cell or (size // 2, size // 2)
        self.start_cell = start_cell
        if self.object_cell == self.start_cell:
            raise EnvError("start cell coincides with the object")
        self.step_limit = step_limit
        self.success_reward = success_reward
        self.action_names = ACTIONS_4 + (self.GRASP,)
        self._done = True
        self.episode_return = 0.0

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    @property
    def observation_dim(self) -> int:
        return 4

    def reset(self, seed: int | None = None):
        self.seed = seed
        self._cell = self.start_cell
        self._steps = 0
        self._done = False
        self.episode_return = 0.0
        return self._observe()

    def state(self) -> tuple[int, int]:
        return self._cell

    def _free(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.size and 0 <= c < self.size and cell != self.object_cell

    def step(self, action: int) -> StepResult:
        if self._done:
            raise EnvError("episode finished; call reset()")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise EnvError(f"action {action} out of range")
        name = self.action_names[action]
        self._steps += 1
        success = False
        collided = False
        if name == self.GRASP:
            r, c = self._cell
            orr, oc = self.object_cell
            success = abs(r - orr) + abs(c - oc) == 1
        else:
            dr, dc = ACTION_DELTAS[name]
            target = (self._cell[0] + dr, self._cell[1] + dc)
            if self._free(target):
                self._cell = target
            else:
                collided = True
        reward = self.success_reward if success else STEP_PENALTY
        done = success or self._steps >= self.step_limit
        self._done = done
        self.episode_return += reward
        return StepResult(
            self._observe(), reward, done, {"collision": collided, "zone": None, "success": success}
        )

    def _observe(self):
        r, c = self._cell
        orr, oc = self.object_cell
        n = self.size
        return np.array([r / n, c / n, (orr - r) / n, (oc - c) / n])


# ---------------------------------------------------------------- exports

def maze_env(scene_document: str, zones: RewardZones | None = None, config: dict | None = None) -> MazeEnv:
    config = config or {}
    return MazeEnv(
        scene_document,
        zones,
        obs=config.get("obs", "features"),
        actions=config.get("actions", "discrete4"),
        step_limit=int(config.get("step_limit", MAZE_STEP_LIMIT)),
        resolution=float(config.get("resolution", 1.0)),
        depth_rays=int(config.get("depth_rays", 32)),
    )


def grasp_env(config: dict | None = None) -> GraspEnv:
    config = config or {}
    return GraspEnv(
        size=int(config.get("size", 5)),
        object_cell=tuple(config["object_cell"]) if "object_cell" in config else None,
        start_cell=tuple(config.get("start_cell", (0, 0))),
        step_limit=int(config.get("step_limit", GRASP_STEP_LIMIT)),
        success_reward=float(config.get("success_reward", 1.0)),
    )


def load_env_config(path) -> MazeEnv | GraspEnv:
    """Instantiate an environment from its JSON config file."""
    path = Path(path)
    cfg = json.loads(path.read_text())
    task = cfg.get("task")
    if task == "maze":
        scene_path = Path(cfg["scene"])
        if not scene_path.is_absolute():
            scene_path = path.parent / scene_path
        zones = RewardZones.from_config(cfg.get("zones", []))
        return maze_env(scene_path.read_text(), zones, cfg)
    if task == "grasp":
        return grasp_env(cfg)
    raise EnvError(f"unknown task {task!r}")


def as_grid_mdp(
    env,
    resolution: float | None = None,
    gamma: float = 0.99,
    features: str = "onehot",
    reward: str = "zones",
) -> GridMDP:
    """Export an environment's discrete structure as an explicit MDP.

    reward="zones" copies the zone values into the state-reward vector (the
    IRL substrate); reward="task" makes the episodic objective explicit:
    step penalty everywhere, goal value at the terminals.  The one-shot
    zone bonuses of the live environment have no repeatable-state analogue.
    """
    if isinstance(env, MazeEnv):
        grid = env.grid if resolution in (None, env.resolution) else sc.occupancy_grid(env.base_scene, resolution)
        if not grid.free_cells():
            raise EnvError("no free cells at this resolution")

        terminal_cells = {
            (r, c)
            for r, c in grid.free_cells()
            if env.goal_box.contains_point(*grid.cell_center(r, c))
        }

        goal_value = env.zones.goal_zone().reward if env.zones.goal_zone() else 1.0

        def reward_at(r, c):
            if reward == "task":
                return goal_value if (r, c) in terminal_cells else STEP_PENALTY
            x, y = grid.cell_center(r, c)
            z = env.zones.zone_at(x, y)
            return z.reward if z else 0.0
        if features == "handcrafted":
            def feature_fn(r, c):
                x, y = grid.cell_center(r, c)
                z = env.zones.zone_at(x, y)
                zone_ind = [1.0 if z and z.name == name else 0.0 for name in ZONE_ORDER]
                goal = next(iter(sorted(terminal_cells)))
                dist = abs(r - goal[0]) + abs(c - goal[1])
                blocked_adj = sum(
                    0 if grid.is_free(r + dr, c + dc) else 1 for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                )
                return zone_ind + [float(dist), float(blocked_adj)]
            feats = feature_fn
        else:
            feats = features
        return grid_mdp_from_occupancy(
            grid,
            reward_at,
            start_cell=grid.world_to_cell(env.spawn.x, env.spawn.y),
            terminal_cells=terminal_cells,
            gamma=gamma,
            diagonal=env.action_mode == "discrete8",
            features=feats,
        )
    if isinstance(env, GraspEnv):
        return _grasp_mdp(env, gamma, features, reward)
    raise EnvError(f"cannot export {type(env).__name__} as a grid MDP")


def _grasp_mdp(env: GraspEnv, gamma: float, features: str, reward_mode: str = "zones") -> GridMDP:
    """States are (cell, holding); a grasp adjacent to the object absorbs."""
    n = env.size
    cells = [(r, c) for r in range(n) for c in range(n) if (r, c) != env.object_cell]
    index = {cell: i for i, cell in enumerate(cells)}
    m = len(cells)
    names = env.action_names
    trans = np.zeros((2 * m, len(names)), dtype=np.int64)
    reward = np.full(2 * m, STEP_PENALTY if reward_mode == "task" else 0.0)
    terminals = set()
    for cell, s in index.items():
        hold = s + m
        trans[hold, :] = hold
        terminals.add(hold)
        reward[hold] = env.success_reward
        for a, name in enumerate(names):
            if name == GraspEnv.GRASP:
                adjacent = abs(cell[0] - env.object_cell[0]) + abs(cell[1] - env.object_cell[1]) == 1
                trans[s, a] = hold if adjacent else s
            else:
                dr, dc = ACTION_DELTAS[name]
                trans[s, a] = index.get((cell[0] + dr, cell[1] + dc), s)
    if features == "onehot":
        feats = np.eye(2 * m)
    else:
        feats = np.array(
            [[r, c, 0.0] for r, c in cells] + [[r, c, 1.0] for r, c in cells], dtype=np.float64
        )
    all_cells = tuple(cells) + tuple(cells)
    return GridMDP(
        trans,
        feats,
        reward,
        gamma,
        frozenset(terminals),
        index[env.start_cell],
        names,
        cells=all_cells,
    )


def rollout(env, policy, seed: int = 0, max_steps: int | None = None) -> Trajectory:
    """Run a policy in an environment; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    traj = Trajectory()
    limit = max_steps if max_steps is not None else env.step_limit
    for _ in range(limit):
        action = policy(obs, rng)
        state = env.state()
        result = env.step(action)
        traj.states.append(state)
        traj.actions.append(action if np.isscalar(action) else list(np.asarray(action)))
        traj.rewards.append(result.reward)
        obs = result.observation
        if result.done:
            break
    return traj

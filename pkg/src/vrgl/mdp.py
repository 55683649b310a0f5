"""Explicit finite MDPs exported from scenes, for planning and reward inference."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .scene import OccupancyGrid

ACTIONS_4 = ("N", "S", "E", "W")
ACTIONS_8 = ("N", "S", "E", "W", "NE", "NW", "SE", "SW")
# grid rows grow southward, so N decreases the row index
ACTION_DELTAS = {
    "N": (-1, 0),
    "S": (1, 0),
    "E": (0, 1),
    "W": (0, -1),
    "NE": (-1, 1),
    "NW": (-1, -1),
    "SE": (1, 1),
    "SW": (1, -1),
}


class MdpError(ValueError):
    pass


@dataclass
class GridMDP:
    """Deterministic tabular MDP: blocked moves self-loop, terminals absorb."""

    transitions: np.ndarray  # int [n_states, n_actions] -> next state
    features: np.ndarray  # float [n_states, n_features]
    reward: np.ndarray  # float [n_states]
    gamma: float
    terminals: frozenset[int]
    start: int
    action_names: tuple[str, ...]
    cells: tuple[tuple[int, int], ...] | None = None  # state index -> (row, col)
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        n = self.n_states
        if not 0.0 < self.gamma < 1.0:
            raise MdpError("gamma must be in (0, 1)")
        if self.transitions.ndim != 2 or self.transitions.shape[1] != len(self.action_names):
            raise MdpError("transition table shape mismatch")
        if (self.transitions < 0).any() or (self.transitions >= n).any():
            raise MdpError("transition target out of range")
        if self.features.shape[0] != n or self.reward.shape[0] != n:
            raise MdpError("features/reward length mismatch")
        if not 0 <= self.start < n:
            raise MdpError("start state out of range")
        for t in self.terminals:
            if not 0 <= t < n:
                raise MdpError("terminal state out of range")
            if not (self.transitions[t] == t).all():
                raise MdpError(f"terminal state {t} must be absorbing")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def state_of_cell(self, row: int, col: int) -> int:
        if self.cells is None:
            raise MdpError("this MDP carries no cell map")
        return self.cells.index((row, col))

    def with_reward(self, reward: np.ndarray) -> "GridMDP":
        return GridMDP(
            self.transitions,
            self.features,
            np.asarray(reward, dtype=np.float64),
            self.gamma,
            self.terminals,
            self.start,
            self.action_names,
            self.cells,
            self.state_labels,
        )

    def to_dict(self) -> dict:
        return {
            "transitions": self.transitions.tolist(),
            "features": self.features.tolist(),
            "reward": self.reward.tolist(),
            "gamma": self.gamma,
            "terminals": sorted(self.terminals),
            "start": self.start,
            "actions": list(self.action_names),
            "cells": [list(c) for c in self.cells] if self.cells else None,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, d: dict) -> "GridMDP":
        return cls(
            np.array(d["transitions"]),
            np.array(d["features"]),
            np.array(d["reward"]),
            float(d["gamma"]),
            frozenset(d["terminals"]),
            int(d["start"]),
            tuple(d["actions"]),
            tuple((r, c) for r, c in d["cells"]) if d.get("cells") else None,
        )

    @classmethod
    def load(cls, path) -> "GridMDP":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def grid_mdp_from_occupancy(
    grid: OccupancyGrid,
    reward_at,
    start_cell: tuple[int, int],
    terminal_cells: set[tuple[int, int]],
    gamma: float = 0.99,
    diagonal: bool = False,
    features: str = "onehot",
    extra_blocked: set[tuple[int, int]] = frozenset(),
) -> GridMDP:
    """Build the tabular MDP over the free cells of an occupancy grid.

    `reward_at(row, col)` supplies the state reward.  Features are one-hot
    per cell by default, or "coords" for (row, col, goal-distance) vectors.
    """
    free = [c for c in grid.free_cells() if c not in extra_blocked]
    if not free:
        raise MdpError("no free cells at this resolution")
    index = {cell: i for i, cell in enumerate(free)}
    if start_cell not in index:
        raise MdpError(f"start cell {start_cell} is not free")
    names = ACTIONS_8 if diagonal else ACTIONS_4
    n = len(free)
    trans = np.zeros((n, len(names)), dtype=np.int64)
    terminals = {index[c] for c in terminal_cells if c in index}
    for cell, s in index.items():
        for a, name in enumerate(names):
            if s in terminals:
                trans[s, a] = s
                continue
            dr, dc = ACTION_DELTAS[name]
            nxt = (cell[0] + dr, cell[1] + dc)
            if name in ("NE", "NW", "SE", "SW"):
                # no corner cutting: both orthogonal neighbours must be free
                if (cell[0] + dr, cell[1]) not in index or (cell[0], cell[1] + dc) not in index:
                    trans[s, a] = s
                    continue
            trans[s, a] = index.get(nxt, s)
    reward = np.array([reward_at(r, c) for r, c in free])
    if callable(features):
        feats = np.array([features(r, c) for r, c in free], dtype=np.float64)
    elif features == "onehot":
        feats = np.eye(n)
    elif features == "coords":
        goal = next(iter(terminal_cells)) if terminal_cells else start_cell
        feats = np.array(
            [[r, c, abs(r - goal[0]) + abs(c - goal[1])] for r, c in free], dtype=np.float64
        )
    else:
        raise MdpError(f"unknown feature set {features!r}")
    return GridMDP(
        trans,
        feats,
        reward,
        gamma,
        frozenset(terminals),
        index[start_cell],
        names,
        cells=tuple(free),
    )


@dataclass
class Trajectory:
    """State/action/reward sequence over a GridMDP."""

    states: list[int] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))

    def to_dict(self) -> dict:
        return {"traj": [[s, a] for s, a in self.steps()]}


def mdp_rollout(mdp: GridMDP, policy, start: int | None = None, max_steps: int = 200, rng=None) -> Trajectory:
    """Roll a policy through the MDP; `policy(state, rng)` returns an action."""
    s = mdp.start if start is None else start
    traj = Trajectory()
    for _ in range(max_steps):
        if s in mdp.terminals:
            break
        a = int(policy(s, rng))
        traj.states.append(s)
        traj.actions.append(a)
        s2 = int(mdp.transitions[s, a])
        traj.rewards.append(float(mdp.reward[s2]))
        s = s2
    return traj


def save_demos(trajectories: list[Trajectory], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in trajectories:
            f.write(json.dumps(t.to_dict()) + "\n")


def load_demos(path) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            t = Trajectory()
            for s, a in d["traj"]:
                t.states.append(int(s))
                t.actions.append(int(a))
                t.rewards.append(0.0)
            out.append(t)
    return out

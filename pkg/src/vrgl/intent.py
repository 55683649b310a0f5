"""Goal inference from trajectory prefixes: three predictors and a planner.

The three predictors trade fidelity for cost: straight-line distance,
perpendicular distance to the heading ray, and a partial-order task grammar
scored by noisy-rational detour cost against an A* oracle.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .scene import OccupancyGrid

SQRT2 = math.sqrt(2.0)
DIAG_STEPS = ((-1, -1), (-1, 1), (1, -1), (1, 1))
ORTHO_STEPS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class IntentError(ValueError):
    pass


# --------------------------------------------------------------- posterior

@dataclass
class GoalPosterior:
    probs: dict[str, float]

    def __post_init__(self):
        if not self.probs:
            raise IntentError("empty posterior")
        total = sum(self.probs.values())
        if any(p < 0 for p in self.probs.values()) or abs(total - 1.0) > 1e-9:
            raise IntentError(f"posterior not normalized: total={total}")

    def top(self) -> str:
        return max(sorted(self.probs), key=lambda g: self.probs[g])

    def __getitem__(self, goal: str) -> float:
        return self.probs[goal]

    def to_dict(self) -> dict:
        return dict(sorted(self.probs.items()))


def _normalize(weights: dict[str, float]) -> GoalPosterior:
    total = sum(weights.values())
    if total <= 0.0 or not math.isfinite(total):
        raise IntentError("no consistent parse: all goal weights vanish")
    return GoalPosterior({g: w / total for g, w in weights.items()})


# --------------------------------------------------------------- predictors

def predict_straightline(pos, goals: dict[str, tuple[float, float]], beta: float = 2.0) -> GoalPosterior:
    """P(g) decays exponentially with Euclidean distance from the agent."""
    if beta <= 0:
        raise IntentError("beta must be positive")
    if not goals:
        raise IntentError("empty goal set")
    d = {g: math.hypot(loc[0] - pos[0], loc[1] - pos[1]) for g, loc in goals.items()}
    d_min = min(d.values())
    return _normalize({g: math.exp(-beta * (dist - d_min)) for g, dist in d.items()})


def ray_distances(
    pos, heading, goals: dict[str, tuple[float, float]]
) -> dict[str, tuple[float, float]]:
    """Per goal: (perpendicular distance to the heading ray, forward projection).

    The heading is normalized internally, so only its direction matters.
    """
    hx, hy = heading
    norm = math.hypot(hx, hy)
    if norm == 0.0:
        raise IntentError("heading must be non-zero")
    hx, hy = hx / norm, hy / norm
    out = {}
    for g, (gx, gy) in goals.items():
        vx, vy = gx - pos[0], gy - pos[1]
        forward = vx * hx + vy * hy
        perp = abs(vx * hy - vy * hx)
        out[g] = (perp, forward)
    return out


def predict_perpendicular(
    pos,
    heading,
    goals: dict[str, tuple[float, float]],
    beta: float = 2.0,
    back_penalty: float = 5.0,
) -> GoalPosterior:
    """P(g) decays with distance from the heading ray; goals behind pay extra."""
    if beta <= 0:
        raise IntentError("beta must be positive")
    if not goals:
        raise IntentError("empty goal set")
    weights = {}
    for g, (perp, forward) in ray_distances(pos, heading, goals).items():
        cost = perp if forward > 0.0 else perp + back_penalty
        weights[g] = math.exp(-beta * cost)
    return _normalize(weights)


# --------------------------------------------------------------- planning

def a_star(
    grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]
) -> tuple[float, list[tuple[int, int]]]:
    """Optimal 8-connected path (unit/sqrt-2 steps, octile heuristic).

    Ties in f are broken by lexicographic cell order.  Unreachable goals
    cost infinity with an empty path.
    """
    if not grid.is_free(*start) or not grid.is_free(*goal):
        return math.inf, []
    if start == goal:
        return 0.0, [start]

    def h(cell):
        dr, dc = abs(cell[0] - goal[0]), abs(cell[1] - goal[1])
        return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)

    open_heap = [(h(start), start)]
    g_cost = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    while open_heap:
        f, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in parent:
                cell = parent[cell]
                path.append(cell)
            return g_cost[goal], path[::-1]
        closed.add(cell)
        r, c = cell
        for dr, dc in ORTHO_STEPS + DIAG_STEPS:
            nxt = (r + dr, c + dc)
            if not grid.is_free(*nxt):
                continue
            diagonal = dr != 0 and dc != 0
            if diagonal and not (grid.is_free(r + dr, c) and grid.is_free(r, c + dc)):
                continue  # no corner cutting
            step = SQRT2 if diagonal else 1.0
            cand = g_cost[cell] + step
            if cand < g_cost.get(nxt, math.inf) - 1e-12:
                g_cost[nxt] = cand
                parent[nxt] = cell
                heapq.heappush(open_heap, (cand + h(nxt), nxt))
    return math.inf, []


def path_cost(prefix: list[tuple[int, int]]) -> float:
    """Cost of a cell path under the unit/sqrt-2 step metric."""
    total = 0.0
    for a, b in zip(prefix, prefix[1:]):
        dr, dc = abs(b[0] - a[0]), abs(b[1] - a[1])
        if dr > 1 or dc > 1 or (dr == 0 and dc == 0):
            raise IntentError(f"prefix jump {a} -> {b}")
        total += SQRT2 if dr and dc else 1.0
    return total


# --------------------------------------------------------------- grammar

@dataclass
class TaskGrammar:
    """Subgoals plus before/after constraints; orders consistent with the
    partial order are the admissible task sequences."""

    subgoals: tuple[str, ...]
    order: tuple[tuple[str, str], ...] = ()
    sequence_weight: object = None  # optional callable: tuple[str, ...] -> float

    def __post_init__(self):
        names = set(self.subgoals)
        for a, b in self.order:
            if a not in names or b not in names:
                raise IntentError(f"constraint ({a}, {b}) references unknown subgoal")
        if self._has_cycle():
            raise IntentError("precedence constraints contain a cycle")

    def _has_cycle(self) -> bool:
        succ = {s: set() for s in self.subgoals}
        for a, b in self.order:
            succ[a].add(b)
        seen: dict[str, int] = {}

        def visit(node) -> bool:
            state = seen.get(node, 0)
            if state == 1:
                return True
            if state == 2:
                return False
            seen[node] = 1
            if any(visit(m) for m in succ[node]):
                return True
            seen[node] = 2
            return False

        return any(visit(s) for s in self.subgoals)

    def admissible_sequences(
        self, completed: set[str] = frozenset(), limit: int = 10_000, rng=None
    ) -> list[tuple[str, ...]]:
        """Topological orders of the remaining subgoals.

        Small sets are enumerated exactly; large ones are Monte Carlo sampled
        (duplicates act as frequency weights in the caller's marginal).
        """
        remaining = [s for s in self.subgoals if s not in completed]
        constraints = [(a, b) for a, b in self.order if a not in completed and b not in completed]

        def admissible(perm) -> bool:
            pos = {s: i for i, s in enumerate(perm)}
            return all(pos[a] < pos[b] for a, b in constraints)

        if len(remaining) <= 8:
            out = [p for p in itertools.permutations(remaining) if admissible(p)]
            if len(out) > limit:
                rng = rng or np.random.default_rng(0)
                idx = rng.choice(len(out), size=limit, replace=False)
                out = [out[i] for i in idx]
            return out
        rng = rng or np.random.default_rng(0)
        out = []
        attempts = 0
        while len(out) < limit and attempts < 20 * limit:
            perm = tuple(rng.permutation(remaining))
            attempts += 1
            if admissible(perm):
                out.append(perm)
        return out


DEFAULT_COFFEE_GRAMMAR = TaskGrammar(
    ("mug", "coffee_maker", "milk", "sugar"), order=(("mug", "coffee_maker"),)
)


def predict_grammar(
    prefix: list[tuple[int, int]],
    grammar: TaskGrammar,
    goals: dict[str, tuple[int, int]],
    grid: OccupancyGrid,
    lam: float = 1.0,
    completed: set[str] = frozenset(),
    planner=a_star,
) -> GoalPosterior:
    """Posterior over the next subgoal under the noisy-rational detour model.

    Each admissible sequence votes for its first remaining subgoal g with
    weight prior(seq) * exp(-lam * detour(g)), where detour is the extra
    cost of the observed prefix relative to the optimal path to g.
    """
    if not prefix:
        raise IntentError("prefix must contain at least the start cell")
    sequences = grammar.admissible_sequences(set(completed))
    if not sequences:
        raise IntentError("no consistent parse: all subgoals completed or excluded")
    start, current = prefix[0], prefix[-1]
    walked = path_cost(prefix)

    support = sorted({seq[0] for seq in sequences})
    detour = {}
    for g in support:
        if g not in goals:
            raise IntentError(f"subgoal {g!r} has no goal location")
        c_rest, _ = planner(grid, current, goals[g])
        c_direct, _ = planner(grid, start, goals[g])
        detour[g] = walked + c_rest - c_direct

    weight_fn = grammar.sequence_weight or (lambda seq: 1.0)
    weights = {g: 0.0 for g in support}
    for seq in sequences:
        g = seq[0]
        if math.isfinite(detour[g]):
            weights[g] += float(weight_fn(seq)) * math.exp(-lam * detour[g])
    return _normalize(weights)


# --------------------------------------------------------------- heat map

def posterior_heatmap(
    posterior: GoalPosterior,
    goals: dict[str, tuple[int, int]],
    grid_shape: tuple[int, int],
    sigma: float = 1.0,
    normalize: bool = True,
) -> np.ndarray:
    """Gaussian splat of each goal's mass at its cell; peak-normalized output.

    With normalize=False the array integrates to the posterior's total mass
    (up to kernel truncation at the borders).
    """
    rows, cols = grid_shape
    heat = np.zeros((rows, cols))
    radius = max(1, int(math.ceil(4 * sigma)))
    ks = np.arange(-radius, radius + 1)
    kernel = np.exp(-(ks[:, None] ** 2 + ks[None, :] ** 2) / (2 * sigma**2))
    kernel /= kernel.sum()
    for g, p in posterior.probs.items():
        if g not in goals:
            raise IntentError(f"goal {g!r} missing a location")
        r, c = goals[g]
        if not (0 <= r < rows and 0 <= c < cols):
            raise IntentError(f"goal {g!r} at {(r, c)} outside the grid")
        r0, r1 = max(0, r - radius), min(rows, r + radius + 1)
        c0, c1 = max(0, c - radius), min(cols, c + radius + 1)
        heat[r0:r1, c0:c1] += p * kernel[
            r0 - r + radius : r1 - r + radius, c0 - c + radius : c1 - c + radius
        ]
    if normalize and heat.max() > 0:
        heat = heat / heat.max()
    return heat


# --------------------------------------------------------------- session glue

def session_prefix(session, grid: OccupancyGrid, agent_id: str) -> list[tuple[int, int]]:
    """Odometry of one agent snapped to grid cells, consecutive duplicates dropped."""
    cells: list[tuple[int, int]] = []
    for r in session.by_kind("odom"):
        if r["agent"] != agent_id:
            continue
        cell = grid.world_to_cell(r["x"], r["y"])
        if not cells or cell != cells[-1]:
            cells.append(cell)
    return cells


def completed_subgoals(session, subgoals) -> set[str]:
    """Subgoals completed so far: successful grasp of or interaction with them."""
    done = set()
    names = set(subgoals)
    for r in session.by_kind("action"):
        if r.get("outcome") == "ok" and r.get("target") in names:
            if r.get("verb") in ("grasp", "press_button", "pour", "twist_door", "push_door"):
                done.add(r["target"])
    return done

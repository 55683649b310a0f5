"""Planar geometry primitives: poses, axis-aligned boxes, sweeps, ray casts."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle into [-pi, pi)."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar pose: position in meters, heading in radians in [-pi, pi)."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def heading(self) -> tuple[float, float]:
        return math.cos(self.yaw), math.sin(self.yaw)

    def transform(self, lx: float, ly: float, lyaw: float = 0.0) -> "Pose":
        """Compose this pose with a local offset (local frame -> world)."""
        c, s = self.heading()
        return Pose(self.x + c * lx - s * ly, self.y + s * lx + c * ly, self.yaw + lyaw)

    def inverse_transform(self, other: "Pose") -> tuple[float, float, float]:
        """Express `other` in this pose's frame; returns (lx, ly, lyaw)."""
        c, s = self.heading()
        dx, dy = other.x - self.x, other.y - self.y
        return c * dx + s * dy, -s * dx + c * dy, wrap_angle(other.yaw - self.yaw)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(float(d["x"]), float(d["y"]), float(d.get("yaw", 0.0)))


@dataclass(frozen=True)
class AABB:
    """World-axis-aligned box [x0,x1] x [y0,y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    @classmethod
    def centered(cls, cx: float, cy: float, hx: float, hy: float) -> "AABB":
        return cls(cx - hx, cy - hy, cx + hx, cy + hy)

    def expanded(self, hx: float, hy: float) -> "AABB":
        """Minkowski sum with a (hx, hy) box, for point-vs-box sweeps."""
        return AABB(self.x0 - hx, self.y0 - hy, self.x1 + hx, self.y1 + hy)

    def overlaps(self, other: "AABB", eps: float = 0.0) -> bool:
        """Strict overlap test; touching edges do not count."""
        return (
            self.x0 < other.x1 - eps
            and other.x0 < self.x1 - eps
            and self.y0 < other.y1 - eps
            and other.y0 < self.y1 - eps
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def separation(self, other: "AABB") -> float:
        """Largest axis gap between the boxes (negative when overlapping)."""
        return max(
            other.x0 - self.x1,
            self.x0 - other.x1,
            other.y0 - self.y1,
            self.y0 - other.y1,
        )


def sweep_point_axis(
    start: float,
    other: float,
    delta: float,
    boxes: list[tuple[str, AABB]],
    axis: int,
    eps: float = 1e-12,
) -> tuple[float, str | None]:
    """Sweep a point along one axis against Minkowski-expanded boxes.

    `start` is the moving coordinate (x when axis=0, y when axis=1), `other`
    the fixed cross coordinate.  Boxes are (id, expanded AABB) pairs sorted
    by id, which fixes tie-breaking.  Returns the clamped delta and the id
    of the first obstacle hit, if any.
    """
    if delta == 0.0:
        return 0.0, None
    best = delta
    hit: str | None = None
    for eid, box in boxes:
        blo, bhi = (box.y0, box.y1) if axis == 0 else (box.x0, box.x1)
        if not (blo + eps < other < bhi - eps):
            continue
        mlo, mhi = (box.x0, box.x1) if axis == 0 else (box.y0, box.y1)
        if delta > 0.0:
            if start >= mhi - eps or start + best <= mlo:
                continue
            if start <= mlo + eps:
                allowed = mlo - start
                if allowed < best:
                    best, hit = allowed, eid
        else:
            if start <= mlo + eps or start + best >= mhi:
                continue
            if start >= mhi - eps:
                allowed = mhi - start
                if allowed > best:
                    best, hit = allowed, eid
    return best, hit


def ray_box_intersect(
    ox: float, oy: float, dx: float, dy: float, box: AABB
) -> tuple[float, tuple[float, float]] | None:
    """Slab intersection of ray (origin, unit dir) with a box.

    Returns (t, outward face normal) for the nearest hit with t >= 0, or
    None.  A ray starting inside the box reports t of the exit face.
    """
    tmin, tmax = -math.inf, math.inf
    n_enter = (0.0, 0.0)
    n_exit = (0.0, 0.0)
    for o, d, lo, hi, n_lo, n_hi in (
        (ox, dx, box.x0, box.x1, (-1.0, 0.0), (1.0, 0.0)),
        (oy, dy, box.y0, box.y1, (0.0, -1.0), (0.0, 1.0)),
    ):
        if d != 0.0:
            inv = 1.0 / d
            if inv > 0.0:
                t_in, n_in, t_out, n_out = (lo - o) * inv, n_lo, (hi - o) * inv, n_hi
            else:
                t_in, n_in, t_out, n_out = (hi - o) * inv, n_hi, (lo - o) * inv, n_lo
            if t_in > tmin:
                tmin, n_enter = t_in, n_in
            if t_out < tmax:
                tmax, n_exit = t_out, n_out
        elif not (lo <= o <= hi):
            return None
    if tmax < tmin or tmax < 0.0:
        return None
    if tmin >= 0.0:
        return tmin, n_enter
    return tmax, n_exit


def point_segment_distance(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / L2))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))

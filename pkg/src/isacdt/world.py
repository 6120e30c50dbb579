"""Ground-truth world model: floor plan geometry, machine kinematics, observables.

Everything here is 2D and purely functional; the sensing layer probes this
module for truth and never mutates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .errors import DegenerateGeometryError, InvalidArgumentError


def wrap_angle(a: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgumentError(f"non-finite Vec2 components ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for floor bounds and twin regions."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p: Vec2, eps: float = 0.0) -> bool:
        return (self.xmin - eps <= p.x <= self.xmax + eps
                and self.ymin - eps <= p.y <= self.ymax + eps)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


Polygon = tuple[Vec2, ...]


def _segments_intersect(p1: Vec2, p2: Vec2, p3: Vec2, p4: Vec2) -> bool:
    """Proper segment intersection test (shared endpoints do not count)."""
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _cross(a: Vec2, b: Vec2, c: Vec2) -> float:
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


@dataclass(frozen=True)
class FloorPlan:
    bounds: Rect
    obstacles: tuple[Polygon, ...] = ()

    def __post_init__(self):
        for i, poly in enumerate(self.obstacles):
            if len(poly) < 3:
                raise InvalidArgumentError(f"obstacle {i} has fewer than 3 vertices")
            for v in poly:
                if not self.bounds.contains(v):
                    raise InvalidArgumentError(
                        f"obstacle {i} vertex ({v.x}, {v.y}) outside bounds")
            n = len(poly)
            for a in range(n):
                for b in range(a + 1, n):
                    # adjacent edges share an endpoint; skip them
                    if b == a + 1 or (a == 0 and b == n - 1):
                        continue
                    if _segments_intersect(poly[a], poly[(a + 1) % n],
                                           poly[b], poly[(b + 1) % n]):
                        raise InvalidArgumentError(f"obstacle {i} is self-intersecting")

    def obstacle_segments(self):
        """Yield (obstacle_index, a, b) for every obstacle edge."""
        for i, poly in enumerate(self.obstacles):
            n = len(poly)
            for k in range(n):
                yield i, poly[k], poly[(k + 1) % n]


class MachineKind(Enum):
    BS = "BS"
    AGV = "AGV"
    UAV = "UAV"
    VEHICLE = "VEHICLE"


@dataclass(frozen=True)
class MachineNode:
    id: str
    kind: MachineKind
    pose: Vec2
    heading: float
    velocity: Vec2 = field(default=Vec2(0.0, 0.0))
    antenna_count: int = 1
    isac_capable: bool = True

    def __post_init__(self):
        if self.antenna_count < 1:
            raise InvalidArgumentError("antenna_count must be >= 1")
        if self.kind is MachineKind.BS and self.velocity.norm() != 0.0:
            raise InvalidArgumentError("BS nodes must be static")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[tuple[float, Vec2], ...]

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise InvalidArgumentError("trajectory needs at least one waypoint")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgumentError("trajectory timestamps must strictly increase")

    @property
    def t_start(self) -> float:
        return self.waypoints[0][0]

    @property
    def t_end(self) -> float:
        return self.waypoints[-1][0]

    def sample(self, t: float) -> tuple[Vec2, Vec2]:
        """Position and velocity at time t (clamped to the waypoint span)."""
        wps = self.waypoints
        if t <= wps[0][0]:
            if len(wps) == 1:
                return wps[0][1], Vec2(0.0, 0.0)
            return wps[0][1], _segment_velocity(wps[0], wps[1])
        for (t0, p0), (t1, p1) in zip(wps, wps[1:]):
            if t <= t1:
                u = (t - t0) / (t1 - t0)
                pos = Vec2(p0.x + u * (p1.x - p0.x), p0.y + u * (p1.y - p0.y))
                return pos, _segment_velocity((t0, p0), (t1, p1))
        return wps[-1][1], Vec2(0.0, 0.0)


def _segment_velocity(a: tuple[float, Vec2], b: tuple[float, Vec2]) -> Vec2:
    dt = b[0] - a[0]
    return Vec2((b[1].x - a[1].x) / dt, (b[1].y - a[1].y) / dt)


def advance_kinematics(node: MachineNode, dt: float) -> MachineNode:
    """Constant-velocity integration over dt seconds."""
    if dt < 0:
        raise InvalidArgumentError(f"dt must be >= 0, got {dt}")
    pose = Vec2(node.pose.x + node.velocity.x * dt, node.pose.y + node.velocity.y * dt)
    heading = node.heading
    if node.velocity.norm() > 0:
        heading = math.atan2(node.velocity.y, node.velocity.x)
    return replace(node, pose=pose, heading=wrap_angle(heading))


def _ray_segment_distance(origin: Vec2, d: Vec2, a: Vec2, b: Vec2) -> Optional[float]:
    """Distance along ray (origin, unit d) to segment ab, or None if no hit."""
    ex, ey = b.x - a.x, b.y - a.y
    denom = d.x * ey - d.y * ex
    if abs(denom) < 1e-15:
        return None
    ax, ay = a.x - origin.x, a.y - origin.y
    t = (ax * ey - ay * ex) / denom
    s = (ax * d.y - ay * d.x) / denom
    if t > 1e-9 and -1e-12 <= s <= 1.0 + 1e-12:
        return t
    return None


def raycast(plan: FloorPlan, origin: Vec2, bearing: float,
            max_range: float) -> Optional[float]:
    """Nearest intersection distance of a ray with obstacles or bounds.

    Returns None when the first hit lies beyond max_range. Ties resolve to the
    smallest distance, then the lowest obstacle index (bounds count as index -1
    and are checked last, which cannot matter since they are never closer than
    an interior obstacle at equal distance in practice).
    """
    if max_range <= 0:
        raise InvalidArgumentError("max_range must be > 0")
    if not plan.bounds.contains(origin):
        raise InvalidArgumentError(f"origin ({origin.x}, {origin.y}) outside bounds")
    d = Vec2(math.cos(bearing), math.sin(bearing))
    best: Optional[tuple[float, int]] = None
    for idx, a, b in plan.obstacle_segments():
        t = _ray_segment_distance(origin, d, a, b)
        if t is not None and (best is None or (t, idx) < best):
            best = (t, idx)
    bb = plan.bounds
    corners = (Vec2(bb.xmin, bb.ymin), Vec2(bb.xmax, bb.ymin),
               Vec2(bb.xmax, bb.ymax), Vec2(bb.xmin, bb.ymax))
    for k in range(4):
        t = _ray_segment_distance(origin, d, corners[k], corners[(k + 1) % 4])
        if t is not None and (best is None or t < best[0]):
            best = (t, -1)
    if best is None or best[0] > max_range:
        return None
    return best[0]


def line_of_sight(plan: FloorPlan, a: Vec2, b: Vec2) -> bool:
    """True when no obstacle edge blocks the open segment between a and b."""
    dist = (b - a).norm()
    if dist == 0:
        return True
    bearing = math.atan2(b.y - a.y, b.x - a.x)
    d = Vec2(math.cos(bearing), math.sin(bearing))
    for _, p, q in plan.obstacle_segments():
        t = _ray_segment_distance(a, d, p, q)
        if t is not None and t < dist - 1e-9:
            return False
    return True


def ground_truth_observables(sensor: MachineNode,
                             target: MachineNode) -> tuple[float, float, float]:
    """(range, azimuth in sensor frame, radial velocity; positive = receding)."""
    dp = target.pose - sensor.pose
    rng = dp.norm()
    if rng == 0:
        raise DegenerateGeometryError("sensor and target are coincident")
    azimuth = wrap_angle(math.atan2(dp.y, dp.x) - sensor.heading)
    dv = target.velocity - sensor.velocity
    radial = dv.dot(dp.scaled(1.0 / rng))
    return rng, azimuth, radial


def _rect_poly(cx: float, cy: float, w: float, h: float) -> Polygon:
    return (Vec2(cx - w / 2, cy - h / 2), Vec2(cx + w / 2, cy - h / 2),
            Vec2(cx + w / 2, cy + h / 2), Vec2(cx - w / 2, cy + h / 2))


def factory_default_plan() -> FloorPlan:
    """Rectangular 60 m x 30 m hall with 6 rectangular machine obstacles.

    Two rows of three machines leave a central corridor at y = 15 m and a
    perimeter corridor along the walls.
    """
    machines = []
    # 8.1 x 4.1 m footprints keep the faces off the 0.25 m mapping lattice,
    # so surface hits land inside a cell instead of exactly on an edge
    for cx in (10.0, 30.0, 50.0):
        for cy in (8.0, 22.0):
            machines.append(_rect_poly(cx, cy, 8.1, 4.1))
    return FloorPlan(bounds=Rect(0.0, 0.0, 60.0, 30.0), obstacles=tuple(machines))

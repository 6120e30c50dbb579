"""Cooperative localization fusion and occupancy-grid mapping.

Fusion across base stations is either an unweighted average of position
estimates or an inverse-variance weighted average. Environment mapping uses a
log-odds occupancy grid with an inverse sensor model and cell-wise grid
fusion across vehicles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon, box as shapely_box

from .errors import InvalidArgumentError, UndefinedMetricError
from .signal import Measurement
from .world import FloorPlan, Vec2

LOG_ODDS_CLAMP = 10.0
L_OCC = 0.85
L_FREE = 0.4


@dataclass
class OccupancyGrid:
    origin: Vec2
    cell_size: float
    width: int
    height: int
    cells: np.ndarray = None  # log-odds, shape (height, width)
    observed: np.ndarray = None  # update counters, same shape

    def __post_init__(self):
        if self.cell_size <= 0:
            raise InvalidArgumentError("cell_size must be > 0")
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width))
        if self.observed is None:
            self.observed = np.zeros((self.height, self.width), dtype=np.int64)

    def same_geometry(self, other: "OccupancyGrid") -> bool:
        return (self.origin == other.origin and self.cell_size == other.cell_size
                and self.width == other.width and self.height == other.height)

    def cell_of(self, p: Vec2) -> tuple[int, int]:
        """(ix, iy) of the cell containing p, clamped to the grid."""
        ix = int((p.x - self.origin.x) / self.cell_size)
        iy = int((p.y - self.origin.y) / self.cell_size)
        return (min(max(ix, 0), self.width - 1), min(max(iy, 0), self.height - 1))

    def contains(self, p: Vec2) -> bool:
        return (self.origin.x <= p.x <= self.origin.x + self.width * self.cell_size
                and self.origin.y <= p.y <= self.origin.y + self.height * self.cell_size)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.origin, self.cell_size, self.width, self.height,
                             self.cells.copy(), self.observed.copy())

    @staticmethod
    def for_bounds(xmin: float, ymin: float, xmax: float, ymax: float,
                   cell_size: float = 0.25) -> "OccupancyGrid":
        w = max(1, int(round((xmax - xmin) / cell_size)))
        h = max(1, int(round((ymax - ymin) / cell_size)))
        return OccupancyGrid(Vec2(xmin, ymin), cell_size, w, h)


@dataclass(frozen=True)
class FusionReport:
    fused_position: Vec2
    per_sensor_errors: tuple[float, ...]
    fused_error: float


def fuse_average(measurements: list[Measurement]) -> Vec2:
    """Unweighted component-wise mean of measurement positions."""
    if not measurements:
        raise InvalidArgumentError("fuse_average needs at least one measurement")
    n = len(measurements)
    return Vec2(math.fsum(m.position.x for m in measurements) / n,
                math.fsum(m.position.y for m in measurements) / n)


def fuse_weighted(measurements: list[Measurement]) -> Vec2:
    """Inverse-variance weighted mean, weights 1/trace(covariance)."""
    if not measurements:
        raise InvalidArgumentError("fuse_weighted needs at least one measurement")
    weights = []
    for m in measurements:
        tr = float(np.trace(m.covariance))
        if tr <= 0:
            raise InvalidArgumentError("covariance trace must be > 0")
        weights.append(1.0 / tr)
    total = math.fsum(weights)
    x = math.fsum(w * m.position.x for w, m in zip(weights, measurements)) / total
    y = math.fsum(w * m.position.y for w, m in zip(weights, measurements)) / total
    return Vec2(x, y)


def localization_rmse(estimates: list[Vec2], truth: Vec2) -> float:
    if not estimates:
        raise InvalidArgumentError("localization_rmse needs at least one estimate")
    sq = math.fsum((e - truth).dot(e - truth) for e in estimates)
    return math.sqrt(sq / len(estimates))


def _traverse_cells(grid: OccupancyGrid, start: Vec2, bearing: float,
                    length: float) -> list[tuple[int, int]]:
    """Cells crossed by a ray of given length, in order, via integer DDA."""
    cs = grid.cell_size
    dx, dy = math.cos(bearing), math.sin(bearing)
    ix = int((start.x - grid.origin.x) / cs)
    iy = int((start.y - grid.origin.y) / cs)
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    if dx != 0:
        nx = grid.origin.x + (ix + (step_x > 0)) * cs
        t_max_x = (nx - start.x) / dx
        t_dx = cs / abs(dx)
    else:
        t_max_x, t_dx = math.inf, math.inf
    if dy != 0:
        ny = grid.origin.y + (iy + (step_y > 0)) * cs
        t_max_y = (ny - start.y) / dy
        t_dy = cs / abs(dy)
    else:
        t_max_y, t_dy = math.inf, math.inf
    cells = []
    t = 0.0
    while t <= length:
        if 0 <= ix < grid.width and 0 <= iy < grid.height:
            cells.append((ix, iy))
        if t_max_x < t_max_y:
            t = t_max_x
            t_max_x += t_dx
            ix += step_x
        else:
            t = t_max_y
            t_max_y += t_dy
            iy += step_y
    return cells


def grid_update_from_scan(grid: OccupancyGrid, sensor_pose: Vec2, heading: float,
                          scan: list[tuple[float, float | None]],
                          max_range: float = 30.0,
                          l_occ: float = L_OCC, l_free: float = L_FREE) -> OccupancyGrid:
    """Apply an inverse sensor model for one scan; returns a new grid.

    scan entries are (bearing relative to heading, hit range or None). Cells
    strictly between the sensor cell and the hit cell lose l_free; the hit
    cell gains l_occ. No-hit rays mark free up to max_range.
    """
    if not grid.contains(sensor_pose):
        raise InvalidArgumentError("sensor pose outside grid extent")
    out = grid.copy()
    for bearing, hit in scan:
        world_bearing = heading + bearing
        length = hit if hit is not None else max_range
        cells = _traverse_cells(out, sensor_pose, world_bearing, length)
        if not cells:
            continue
        sensor_cell = out.cell_of(sensor_pose)
        if hit is not None:
            hit_point = Vec2(sensor_pose.x + length * math.cos(world_bearing),
                             sensor_pose.y + length * math.sin(world_bearing))
            hit_cell = out.cell_of(hit_point)
            for c in cells:
                if c != sensor_cell and c != hit_cell:
                    out.cells[c[1], c[0]] -= l_free
                    out.observed[c[1], c[0]] += 1
            out.cells[hit_cell[1], hit_cell[0]] += l_occ
            out.observed[hit_cell[1], hit_cell[0]] += 1
        else:
            for c in cells:
                if c != sensor_cell:
                    out.cells[c[1], c[0]] -= l_free
                    out.observed[c[1], c[0]] += 1
    np.clip(out.cells, -LOG_ODDS_CLAMP, LOG_ODDS_CLAMP, out=out.cells)
    return out


def fuse_grids(grids: list[OccupancyGrid]) -> OccupancyGrid:
    """Cell-wise log-odds sum over identically-shaped grids, clamped once."""
    if not grids:
        raise InvalidArgumentError("fuse_grids needs at least one grid")
    head = grids[0]
    for g in grids[1:]:
        if not head.same_geometry(g):
            raise InvalidArgumentError("grid geometries differ")
    cells = np.sum([g.cells for g in grids], axis=0)
    observed = np.sum([g.observed for g in grids], axis=0)
    np.clip(cells, -LOG_ODDS_CLAMP, LOG_ODDS_CLAMP, out=cells)
    return OccupancyGrid(head.origin, head.cell_size, head.width, head.height,
                         cells, observed)


def truth_occupancy(grid: OccupancyGrid, plan: FloorPlan) -> np.ndarray:
    """Boolean truth map: a cell is occupied when its rectangle intersects an
    obstacle polygon or lies on the outermost wall ring of the plan bounds."""
    occ = np.zeros((grid.height, grid.width), dtype=bool)
    polys = [ShapelyPolygon([(v.x, v.y) for v in p]) for p in plan.obstacles]
    cs = grid.cell_size
    for poly in polys:
        minx, miny, maxx, maxy = poly.bounds
        ix0 = max(0, int((minx - grid.origin.x) / cs) - 1)
        ix1 = min(grid.width - 1, int((maxx - grid.origin.x) / cs) + 1)
        iy0 = max(0, int((miny - grid.origin.y) / cs) - 1)
        iy1 = min(grid.height - 1, int((maxy - grid.origin.y) / cs) + 1)
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                cell = shapely_box(grid.origin.x + ix * cs, grid.origin.y + iy * cs,
                                   grid.origin.x + (ix + 1) * cs,
                                   grid.origin.y + (iy + 1) * cs)
                if poly.intersects(cell):
                    occ[iy, ix] = True
    # wall ring: cells touching the plan boundary count as occupied
    b = plan.bounds
    ix0 = max(0, int((b.xmin - grid.origin.x) / cs))
    ix1 = min(grid.width - 1, int(math.ceil((b.xmax - grid.origin.x) / cs)) - 1)
    iy0 = max(0, int((b.ymin - grid.origin.y) / cs))
    iy1 = min(grid.height - 1, int(math.ceil((b.ymax - grid.origin.y) / cs)) - 1)
    occ[iy0, ix0:ix1 + 1] = True
    occ[iy1, ix0:ix1 + 1] = True
    occ[iy0:iy1 + 1, ix0] = True
    occ[iy0:iy1 + 1, ix1] = True
    return occ


def map_accuracy(grid: OccupancyGrid, truth_plan: FloorPlan,
                 occupancy_cutoff: float = 0.0) -> float:
    """Fraction of observed cells whose occupied/free classification matches
    the plan."""
    if not math.isfinite(occupancy_cutoff):
        raise InvalidArgumentError("occupancy_cutoff must be finite")
    observed = grid.observed > 0
    n_obs = int(observed.sum())
    if n_obs == 0:
        raise UndefinedMetricError("no observed cells")
    truth = truth_occupancy(grid, truth_plan)
    predicted = grid.cells > occupancy_cutoff
    correct = (predicted == truth) & observed
    return float(correct.sum()) / n_obs


def grid_to_pgm(grid: OccupancyGrid) -> bytes:
    """P5 PGM, one byte per cell, 255 = occupied probability 1. Row 0 is the
    top of the image (max y)."""
    prob = 1.0 - 1.0 / (1.0 + np.exp(grid.cells))
    img = np.flipud(np.round(prob * 255).astype(np.uint8))
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode()
    return header + img.tobytes()


def grid_to_csv(grid: OccupancyGrid) -> str:
    """CSV rows (x, y, log_odds) at cell centers."""
    lines = ["x,y,log_odds"]
    cs = grid.cell_size
    for iy in range(grid.height):
        for ix in range(grid.width):
            x = grid.origin.x + (ix + 0.5) * cs
            y = grid.origin.y + (iy + 0.5) * cs
            lines.append(f"{x},{y},{grid.cells[iy, ix]}")
    return "\n".join(lines) + "\n"

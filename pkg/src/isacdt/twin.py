"""Digital-twin layer: repositories, local/global twins, prediction, and
trajectory-based disguised-node detection.

The repository is an append-only event log split into a physical-environment
store (position measurements) and a network store (element-field changes and
link observations). Local twins are pure reads over a time-bounded prefix of
the log; the global twin fuses local twins whose regions partition the world.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import (InsufficientEvidenceError, InvalidArgumentError,
                     InvalidPartitionError, NotFoundError, StaleEventError)
from .fusion import OccupancyGrid, fuse_grids
from .signal import Measurement
from .world import MachineKind, Rect, Trajectory, Vec2

ASSOCIATION_GATE_M = 2.0
VELOCITY_FIT_POINTS = 5


class TaskStatus(Enum):
    IDLE = "IDLE"
    EXECUTING = "EXECUTING"
    FAULT = "FAULT"


@dataclass(frozen=True)
class NetworkElementRecord:
    id: str
    address: str
    kind: MachineKind
    link_id: str = ""
    routing_table: tuple[tuple[str, str], ...] = ()
    task_status: TaskStatus = TaskStatus.IDLE
    resource_utilization: float = 0.0
    last_update: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.resource_utilization <= 1.0):
            raise InvalidArgumentError("resource_utilization must be in [0, 1]")


@dataclass(frozen=True)
class LinkObservation:
    a: str
    b: str
    path_gain_db: float = 0.0
    dominant_angle: float = 0.0
    spectrum_utilization: float = 0.0
    last_update: float = 0.0

    def __post_init__(self):
        if self.a == self.b:
            raise InvalidArgumentError("self-loop link")
        if self.a > self.b:  # canonical undirected order
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)


@dataclass
class TopologyGraph:
    nodes: set[str] = field(default_factory=set)
    links: dict[tuple[str, str], LinkObservation] = field(default_factory=dict)


@dataclass
class TrackState:
    track_id: str
    position: Vec2
    velocity: Vec2
    covariance: np.ndarray
    last_update: float
    # (timestamp, position, covariance) of associated measurements, oldest first
    history: list[tuple[float, Vec2, np.ndarray]] = field(default_factory=list)


@dataclass
class EnvironmentModel:
    grid: OccupancyGrid
    tracks: dict[str, TrackState] = field(default_factory=dict)


@dataclass
class LocalTwin:
    region: Rect
    elements: dict[str, NetworkElementRecord]
    topology: TopologyGraph
    environment: EnvironmentModel
    built_at: float


@dataclass
class GlobalTwin:
    region: Rect
    elements: dict[str, NetworkElementRecord]
    topology: TopologyGraph
    environment: EnvironmentModel
    built_at: float
    provenance: dict[str, Rect] = field(default_factory=dict)


Payload = Union[Measurement, NetworkElementRecord, LinkObservation]


@dataclass(frozen=True)
class RepositoryEvent:
    timestamp: float
    source_id: str
    payload: Payload
    source_pos: Optional[Vec2] = None
    arrival_time: Optional[float] = None  # defaults to timestamp (zero latency)


@dataclass
class DataRepository:
    physical_events: list[RepositoryEvent] = field(default_factory=list)
    network_events: list[RepositoryEvent] = field(default_factory=list)
    _last_ts: dict[str, float] = field(default_factory=dict)

    @property
    def accepted_count(self) -> int:
        return len(self.physical_events) + len(self.network_events)


def ingest(repo: DataRepository, event: RepositoryEvent) -> DataRepository:
    """Route an event to the physical or network store; rejects stale events."""
    last = repo._last_ts.get(event.source_id)
    if last is not None and event.timestamp < last:
        raise StaleEventError(
            f"event at t={event.timestamp} older than t={last} from {event.source_id}")
    repo._last_ts[event.source_id] = event.timestamp
    if isinstance(event.payload, Measurement):
        repo.physical_events.append(event)
    else:
        repo.network_events.append(event)
    return repo


def _fit_velocity(history: list[tuple[float, Vec2, np.ndarray]]) -> Vec2:
    """Least-squares line fit over the latest points (two-point difference
    when only two are available)."""
    pts = history[-VELOCITY_FIT_POINTS:]
    if len(pts) < 2 or pts[-1][0] - pts[0][0] <= 0:
        return Vec2(0.0, 0.0)
    k = len(pts)
    tm = sum(p[0] for p in pts) / k
    xm = sum(p[1].x for p in pts) / k
    ym = sum(p[1].y for p in pts) / k
    denom = sum((p[0] - tm) ** 2 for p in pts)
    return Vec2(sum((p[0] - tm) * (p[1].x - xm) for p in pts) / denom,
                sum((p[0] - tm) * (p[1].y - ym) for p in pts) / denom)


def build_local_twin(repo: DataRepository, region: Rect, now: float,
                     cell_size: float = 0.25) -> LocalTwin:
    """Derive a twin for a region from all events arrived by `now`.

    Tracks come from nearest-neighbor association of measurements (gate 2 m);
    element records and link observations keep the latest version per key.
    """
    elements: dict[str, NetworkElementRecord] = {}
    topo = TopologyGraph()
    for ev in repo.network_events:
        if (ev.arrival_time or ev.timestamp) > now:
            continue
        if ev.source_pos is not None and not region.contains(ev.source_pos):
            continue
        if isinstance(ev.payload, NetworkElementRecord):
            elements[ev.payload.id] = ev.payload
            topo.nodes.add(ev.payload.id)
        elif isinstance(ev.payload, LinkObservation):
            topo.nodes.update((ev.payload.a, ev.payload.b))
            topo.links[(ev.payload.a, ev.payload.b)] = ev.payload

    tracks: dict[str, TrackState] = {}
    next_track = 0
    events = sorted((ev for ev in repo.physical_events
                     if (ev.arrival_time or ev.timestamp) <= now
                     and region.contains(ev.payload.position)),
                    key=lambda e: (e.timestamp, e.source_id))
    for ev in events:
        meas: Measurement = ev.payload
        best_id, best_d = None, ASSOCIATION_GATE_M
        for tid, trk in tracks.items():
            d = (meas.position - trk.position).norm()
            if d < best_d:
                best_id, best_d = tid, d
        if best_id is None:
            best_id = f"trk{next_track}"
            next_track += 1
            tracks[best_id] = TrackState(track_id=best_id, position=meas.position,
                                         velocity=Vec2(0.0, 0.0),
                                         covariance=meas.covariance,
                                         last_update=meas.timestamp)
        trk = tracks[best_id]
        trk.history.append((meas.timestamp, meas.position, meas.covariance))
        trk.position = meas.position
        trk.covariance = meas.covariance
        trk.last_update = meas.timestamp
    for trk in tracks.values():
        trk.velocity = _fit_velocity(trk.history)

    grid = OccupancyGrid.for_bounds(region.xmin, region.ymin, region.xmax,
                                    region.ymax, cell_size)
    return LocalTwin(region=region, elements=elements, topology=topo,
                     environment=EnvironmentModel(grid=grid, tracks=tracks),
                     built_at=now)


def _regions_partition(regions: list[Rect]) -> Optional[Rect]:
    """World bounds when the regions tile without overlap, else None."""
    for i, a in enumerate(regions):
        for b in regions[i + 1:]:
            if (a.xmin < b.xmax and b.xmin < a.xmax
                    and a.ymin < b.ymax and b.ymin < a.ymax):
                return None
    xmin = min(r.xmin for r in regions)
    ymin = min(r.ymin for r in regions)
    xmax = max(r.xmax for r in regions)
    ymax = max(r.ymax for r in regions)
    area = math.fsum(r.width * r.height for r in regions)
    if not math.isclose(area, (xmax - xmin) * (ymax - ymin), rel_tol=1e-9):
        return None
    return Rect(xmin, ymin, xmax, ymax)


def merge_global(locals_: list[LocalTwin], now: float,
                 gate: float = ASSOCIATION_GATE_M) -> GlobalTwin:
    """Fuse local twins whose regions partition the world.

    Order-independent: twins are canonically sorted by region before merging.
    Boundary-straddling tracks within the gate are deduplicated by
    inverse-variance position fusion.
    """
    if not locals_:
        raise InvalidArgumentError("merge_global needs at least one local twin")
    twins = sorted(locals_, key=lambda t: (t.region.xmin, t.region.ymin,
                                           t.region.xmax, t.region.ymax))
    world = _regions_partition([t.region for t in twins])
    if world is None:
        raise InvalidPartitionError("local twin regions do not partition the world")

    elements: dict[str, NetworkElementRecord] = {}
    topo = TopologyGraph()
    provenance: dict[str, Rect] = {}
    for t in twins:
        for eid, rec in sorted(t.elements.items()):
            elements[eid] = rec
            provenance[f"element:{eid}"] = t.region
        topo.nodes.update(t.topology.nodes)
        topo.links.update(t.topology.links)

    cell_size = twins[0].environment.grid.cell_size
    global_grid = OccupancyGrid.for_bounds(world.xmin, world.ymin, world.xmax,
                                           world.ymax, cell_size)
    for t in twins:
        g = t.environment.grid
        ox = int(round((g.origin.x - world.xmin) / cell_size))
        oy = int(round((g.origin.y - world.ymin) / cell_size))
        global_grid.cells[oy:oy + g.height, ox:ox + g.width] += g.cells
        global_grid.observed[oy:oy + g.height, ox:ox + g.width] += g.observed
    np.clip(global_grid.cells, -10.0, 10.0, out=global_grid.cells)

    # deduplicate boundary straddlers across twins by inverse-variance fusion
    merged: list[tuple[TrackState, Rect]] = []
    for t in twins:
        for tid in sorted(t.environment.tracks):
            trk = t.environment.tracks[tid]
            partner = None
            for i, (m, _) in enumerate(merged):
                if (m.position - trk.position).norm() <= gate:
                    partner = i
                    break
            if partner is None:
                merged.append((trk, t.region))
            else:
                m, reg = merged[partner]
                wa = 1.0 / max(float(np.trace(m.covariance)), 1e-12)
                wb = 1.0 / max(float(np.trace(trk.covariance)), 1e-12)
                pos = Vec2((wa * m.position.x + wb * trk.position.x) / (wa + wb),
                           (wa * m.position.y + wb * trk.position.y) / (wa + wb))
                newer, older = (trk, m) if trk.last_update >= m.last_update else (m, trk)
                fused = TrackState(track_id=m.track_id, position=pos,
                                   velocity=newer.velocity,
                                   covariance=(m.covariance + trk.covariance) / 4.0,
                                   last_update=newer.last_update,
                                   history=sorted(m.history + trk.history,
                                                  key=lambda h: h[0]))
                merged[partner] = (fused, reg)
    tracks: dict[str, TrackState] = {}
    for i, (trk, reg) in enumerate(merged):
        gid = f"g{i}"
        tracks[gid] = replace_track_id(trk, gid)
        provenance[f"track:{gid}"] = reg

    return GlobalTwin(region=world, elements=elements, topology=topo,
                      environment=EnvironmentModel(grid=global_grid, tracks=tracks),
                      built_at=now, provenance=provenance)


def replace_track_id(trk: TrackState, new_id: str) -> TrackState:
    return TrackState(track_id=new_id, position=trk.position, velocity=trk.velocity,
                      covariance=trk.covariance, last_update=trk.last_update,
                      history=list(trk.history))


def predict_state(twin: LocalTwin | GlobalTwin, track_id: str,
                  t: float) -> tuple[Vec2, float]:
    """Constant-velocity extrapolation of a track to time t."""
    trk = twin.environment.tracks.get(track_id)
    if trk is None:
        raise NotFoundError(f"unknown track id {track_id!r}")
    if t < trk.last_update:
        raise InvalidArgumentError("prediction time before last track update")
    dt = t - trk.last_update
    pos = Vec2(trk.position.x + trk.velocity.x * dt,
               trk.position.y + trk.velocity.y * dt)
    return pos, dt


def detect_disguised(twin: LocalTwin | GlobalTwin, claimed: Trajectory,
                     sensed_track_id: str, gate: float = 9.0) -> str:
    """HONEST or DISGUISED by normalized innovation against the sensed track.

    The statistic is the mean squared Mahalanobis distance between claimed
    waypoints and the track state interpolated at the waypoint time, within
    the track's observed time span.
    """
    trk = twin.environment.tracks.get(sensed_track_id)
    if trk is None:
        raise NotFoundError(f"unknown track id {sensed_track_id!r}")
    hist = trk.history
    if not hist:
        raise InsufficientEvidenceError("sensed track has no history")
    t0, t1 = hist[0][0], hist[-1][0]
    stats = []
    for (tw, pw) in claimed.waypoints:
        if not (t0 <= tw <= t1):
            continue
        pos, cov = _interpolate_history(hist, tw)
        diff = np.array([pw.x - pos.x, pw.y - pos.y])
        cov = cov + 1e-12 * np.eye(2)
        stats.append(float(diff @ np.linalg.solve(cov, diff)))
    if not stats:
        raise InsufficientEvidenceError("no claimed waypoint inside the track span")
    return "DISGUISED" if (math.fsum(stats) / len(stats)) > gate else "HONEST"


def _interpolate_history(hist, t: float) -> tuple[Vec2, np.ndarray]:
    for (ta, pa, ca), (tb, pb, cb) in zip(hist, hist[1:]):
        if ta <= t <= tb:
            u = 0.0 if tb == ta else (t - ta) / (tb - ta)
            pos = Vec2(pa.x + u * (pb.x - pa.x), pa.y + u * (pb.y - pa.y))
            return pos, (ca if u < 0.5 else cb)
    last = hist[-1]
    return last[1], last[2]


def _fmt(x: float) -> str:
    return repr(float(x))


def twin_to_text(twin: LocalTwin | GlobalTwin) -> str:
    """Versioned plain-text snapshot, one `kind|id|fields` record per line.

    The environment grid is referenced by the SHA-256 of its raw cell bytes.
    """
    lines = [f"isacdt-twin|1|built_at={_fmt(twin.built_at)}"
             f"|region={_fmt(twin.region.xmin)},{_fmt(twin.region.ymin)},"
             f"{_fmt(twin.region.xmax)},{_fmt(twin.region.ymax)}"]
    for eid in sorted(twin.elements):
        r = twin.elements[eid]
        routes = ";".join(f"{d}>{n}" for d, n in r.routing_table)
        lines.append(f"element|{eid}|address={r.address}|kind={r.kind.value}"
                     f"|link={r.link_id}|routes={routes}|task={r.task_status.value}"
                     f"|util={_fmt(r.resource_utilization)}|t={_fmt(r.last_update)}")
    for key in sorted(twin.topology.links):
        lk = twin.topology.links[key]
        lines.append(f"link|{lk.a}~{lk.b}|gain_db={_fmt(lk.path_gain_db)}"
                     f"|angle={_fmt(lk.dominant_angle)}"
                     f"|spectrum={_fmt(lk.spectrum_utilization)}|t={_fmt(lk.last_update)}")
    for tid in sorted(twin.environment.tracks):
        trk = twin.environment.tracks[tid]
        lines.append(f"track|{tid}|pos={_fmt(trk.position.x)},{_fmt(trk.position.y)}"
                     f"|vel={_fmt(trk.velocity.x)},{_fmt(trk.velocity.y)}"
                     f"|t={_fmt(trk.last_update)}")
    grid_hash = hashlib.sha256(twin.environment.grid.cells.tobytes()).hexdigest()
    lines.append(f"grid|sha256|{grid_hash}")
    return "\n".join(lines) + "\n"

"""Round-based neighbor discovery: uniform gossip vs DT-assisted gossip.

Each round every node beacons into one of `num_sectors` angular sectors. A
beacon reaching a graph-neighbor triggers mutual discovery and a knowledge
exchange. The uniform policy picks the sector at random; the DT policy aims
at the twin-predicted position of the nearest not-yet-discovered node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, UndefinedMetricError
from .twin import GlobalTwin, LocalTwin, predict_state
from .world import MachineNode, Vec2

NOT_REACHED = -1


class PolicyKind(Enum):
    UNIFORM_GOSSIP = "UNIFORM_GOSSIP"
    DT_GOSSIP = "DT_GOSSIP"


@dataclass
class ContactPolicy:
    kind: PolicyKind
    twin: Optional[LocalTwin | GlobalTwin] = None
    track_of_node: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is PolicyKind.DT_GOSSIP and self.twin is None:
            raise InvalidArgumentError("DT_GOSSIP requires a twin reference")


@dataclass
class DiscoveryState:
    node_id: str
    true_neighbors: set[str]
    known_neighbors: set[str] = field(default_factory=set)
    knowledge_table: dict[str, float] = field(default_factory=dict)  # id -> last-heard round


def build_contact_graph(nodes: list[MachineNode],
                        comm_range: float) -> dict[str, set[str]]:
    """Unit-disk adjacency: edge iff distance <= comm_range."""
    if comm_range <= 0:
        raise InvalidArgumentError("comm_range must be > 0")
    adj: dict[str, set[str]] = {n.id: set() for n in nodes}
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if (a.pose - b.pose).norm() <= comm_range:
                adj[a.id].add(b.id)
                adj[b.id].add(a.id)
    return adj


def initial_states(graph: dict[str, set[str]]) -> dict[str, DiscoveryState]:
    return {nid: DiscoveryState(node_id=nid, true_neighbors=set(neigh))
            for nid, neigh in graph.items()}


def _sector_of(bearing: float, num_sectors: int) -> int:
    b = bearing % (2.0 * math.pi)
    return min(int(b / (2.0 * math.pi / num_sectors)), num_sectors - 1)


def gossip_round(states: dict[str, DiscoveryState], graph: dict[str, set[str]],
                 positions: dict[str, Vec2], policy: ContactPolicy,
                 rng: np.random.Generator, num_sectors: int = 8,
                 round_time: float = 0.0) -> int:
    """Run one synchronous round in place; returns the DT-fallback count.

    Nodes are processed in sorted-id order so results are deterministic per
    seed. Discovery is mutual: an edge (a, b) discovers when either beacon
    covers the other endpoint.
    """
    node_ids = sorted(states)
    chosen: dict[str, int] = {}
    fallbacks = 0
    for nid in node_ids:
        sector = None
        if policy.kind is PolicyKind.DT_GOSSIP:
            target = _nearest_undiscovered(states[nid], positions[nid], policy,
                                           node_ids, round_time)
            if target is None:
                fallbacks += 1
            else:
                bearing = math.atan2(target.y - positions[nid].y,
                                     target.x - positions[nid].x)
                sector = _sector_of(bearing, num_sectors)
        if sector is None:
            sector = int(rng.integers(num_sectors))
        chosen[nid] = sector
    for a in node_ids:
        for b in sorted(graph[a]):
            if b <= a:
                continue
            hit_ab = _covers(positions[a], positions[b], chosen[a], num_sectors)
            hit_ba = _covers(positions[b], positions[a], chosen[b], num_sectors)
            if hit_ab or hit_ba:
                _exchange(states[a], states[b], round_time)
    return fallbacks


def _covers(src: Vec2, dst: Vec2, sector: int, num_sectors: int) -> bool:
    bearing = math.atan2(dst.y - src.y, dst.x - src.x)
    return _sector_of(bearing, num_sectors) == sector


def _nearest_undiscovered(state: DiscoveryState, own_pos: Vec2,
                          policy: ContactPolicy, node_ids: list[str],
                          round_time: float) -> Optional[Vec2]:
    best, best_d = None, math.inf
    for other in node_ids:
        if other == state.node_id or other in state.known_neighbors:
            continue
        track = policy.track_of_node.get(other)
        if track is None or track not in policy.twin.environment.tracks:
            continue
        pos, _ = predict_state(policy.twin, track,
                               max(round_time,
                                   policy.twin.environment.tracks[track].last_update))
        d = (pos - own_pos).norm()
        if d < best_d:
            best, best_d = pos, d
    return best


def _exchange(a: DiscoveryState, b: DiscoveryState, round_time: float) -> None:
    a.known_neighbors.add(b.node_id)
    b.known_neighbors.add(a.node_id)
    merged = dict(a.knowledge_table)
    merged.update(b.knowledge_table)
    merged[a.node_id] = round_time
    merged[b.node_id] = round_time
    a.knowledge_table = dict(merged)
    b.knowledge_table = dict(merged)


def discovery_fraction(states: dict[str, DiscoveryState]) -> float:
    total = sum(len(s.true_neighbors) for s in states.values())
    if total == 0:
        raise UndefinedMetricError("contact graph has no edges")
    known = sum(len(s.known_neighbors) for s in states.values())
    return known / total


def rounds_to_threshold(trace: list[float], threshold: float) -> int:
    """1-based index of the first round with fraction >= threshold, or
    NOT_REACHED."""
    if not trace:
        raise InvalidArgumentError("empty trace")
    if not (0.0 < threshold <= 1.0):
        raise InvalidArgumentError("threshold must be in (0, 1]")
    for i, frac in enumerate(trace, start=1):
        if frac >= threshold:
            return i
    return NOT_REACHED

"""Routes, segment costs, Dijkstra with a deterministic tie-break, failures."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .network import NetworkGraph, NodeKind, Segment

INF = math.inf


@dataclass(frozen=True)
class Route:
    origin: int
    destination: int
    fork_choices: tuple[tuple[int, int], ...]
    path: tuple[int, ...]  # segment ids
    cost: float

    @classmethod
    def from_path(cls, g: NetworkGraph, origin: int, destination: int,
                  path: Sequence[int], cost: float) -> "Route":
        forks = tuple(
            (g.segments[s].src, s) for s in path if g.kind(g.segments[s].src) is NodeKind.FORK
        )
        return cls(origin, destination, forks, tuple(path), cost)

    def length(self, g: NetworkGraph) -> float:
        return sum(g.segments[s].length for s in self.path)


def follow_forks(g: NetworkGraph, origin: int, fork_choices: Iterable[tuple[int, int]],
                 destination: int, max_steps: int = 100_000) -> Optional[list[int]]:
    """Segment path induced by following fork choices; None if it never arrives."""
    choice = dict(fork_choices)
    node, path = origin, []
    for _ in range(max_steps):
        if node == destination and (path or origin == destination):
            return path
        outs = g.out_segs[node]
        if len(outs) == 1:
            sid = outs[0]
        elif node in choice:
            sid = choice[node]
        else:
            return None
        path.append(sid)
        node = g.segments[sid].dst
    return None


@dataclass
class CostModel:
    """Weighted segment cost with congestion and failure overlays.

    cost = (w_len*length + w_time*length/speed + w_type*type_penalty)
           * multiplier * (1 + w_cong*occupancy)
    Failed segments cost +inf.
    """

    w_len: float = 1.0
    w_time: float = 0.0
    w_type: float = 0.0
    w_cong: float = 0.0
    v_max: float = INF
    type_penalty: dict[int, float] = field(default_factory=dict)
    multiplier: dict[int, float] = field(default_factory=dict)
    occupancy: dict[int, float] = field(default_factory=dict)
    failed: set[int] = field(default_factory=set)
    version: int = 0

    def touch(self) -> None:
        self.version += 1

    def fail(self, sid: int) -> None:
        self.failed.add(sid)
        self.touch()

    def restore(self, sid: int) -> None:
        self.failed.discard(sid)
        self.touch()


def edge_cost(cm: CostModel, seg: Segment) -> float:
    if seg.id in cm.failed:
        return INF
    speed = min(seg.v_limit, cm.v_max)
    base = cm.w_len * seg.length + cm.w_time * seg.length / speed
    base += cm.w_type * cm.type_penalty.get(seg.id, 0.0)
    base *= cm.multiplier.get(seg.id, 1.0)
    if cm.w_cong:
        base *= 1.0 + cm.w_cong * cm.occupancy.get(seg.id, 0.0)
    return base


def shortest_path(g: NetworkGraph, cm: CostModel, src: int, dst: int,
                  costs: Optional[dict[int, float]] = None) -> Optional[tuple[float, tuple[int, ...]]]:
    """(cost, segment ids) of the cheapest path; ties go to the smallest id sequence.

    Labels are (cost, path) pairs compared lexicographically, so among paths
    of equal cost the lexicographically smallest segment-id tuple wins.
    Costs are summed in path order, which makes equal-cost comparisons exact
    against any enumeration that sums the same way.
    """
    if src == dst:
        return 0.0, ()
    if costs is None:
        costs = {sid: edge_cost(cm, s) for sid, s in g.segments.items()}
    best: dict[int, tuple[float, tuple[int, ...]]] = {src: (0.0, ())}
    heap = [(0.0, (), src)]
    done: set[int] = set()
    while heap:
        c, path, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return c, path
        for sid in g.out_segs[u]:
            w = costs[sid]
            if w == INF:
                continue
            v = g.segments[sid].dst
            if v in done:
                continue
            label = (c + w, path + (sid,))
            if v not in best or label < best[v]:
                best[v] = label
                heapq.heappush(heap, (label[0], label[1], v))
    return None


def shortest_route(g: NetworkGraph, cm: CostModel, src: int, dst: int) -> Optional[Route]:
    """Cheapest route, or None when dst is unreachable."""
    found = shortest_path(g, cm, src, dst)
    if found is None:
        return None
    cost, path = found
    return Route.from_path(g, src, dst, path, cost)


def distances_from(g: NetworkGraph, src: int, failed: Iterable[int] = ()) -> dict[int, float]:
    """Network distance in metres from src to every reachable node."""
    failed = set(failed)
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for sid in g.out_segs[u]:
            if sid in failed:
                continue
            s = g.segments[sid]
            nd = d + s.length
            if nd < dist.get(s.dst, INF):
                dist[s.dst] = nd
                heapq.heappush(heap, (nd, s.dst))
    return dist


class Router:
    """Route cache keyed by the cost model version."""

    def __init__(self, g: NetworkGraph, cm: CostModel):
        self.g = g
        self.cm = cm
        self._version = -1
        self._costs: dict[int, float] = {}
        self._cache: dict[tuple[int, int], Optional[tuple[float, tuple[int, ...]]]] = {}
        self._dist_key: frozenset[int] = frozenset()
        self._dist: dict[int, dict[int, float]] = {}

    def _sync(self) -> None:
        if self._version != self.cm.version:
            self._version = self.cm.version
            self._costs = {sid: edge_cost(self.cm, s) for sid, s in self.g.segments.items()}
            self._cache.clear()

    def path(self, src: int, dst: int) -> Optional[tuple[float, tuple[int, ...]]]:
        self._sync()
        key = (src, dst)
        if key not in self._cache:
            self._cache[key] = shortest_path(self.g, self.cm, src, dst, self._costs)
        return self._cache[key]

    def route(self, src: int, dst: int) -> Optional[Route]:
        found = self.path(src, dst)
        if found is None:
            return None
        return Route.from_path(self.g, src, dst, found[1], found[0])

    def distance(self, src: int, dst: int) -> float:
        """Metres along the shortest unfailed path (independent of cost weights)."""
        key = frozenset(self.cm.failed)
        if key != self._dist_key:
            self._dist_key = key
            self._dist.clear()
        if src not in self._dist:
            self._dist[src] = distances_from(self.g, src, self.cm.failed)
        return self._dist[src].get(dst, INF)


# -- link failures ------------------------------------------------------------


@dataclass(frozen=True)
class VehicleRouteState:
    """What failure handling needs to know about one travelling vehicle.

    `segment` is the segment the vehicle is on (None when it is parked at
    `node`), `next_node` is the first node it will reach, and `destination` is
    its target station or capacitor.
    """

    vid: int
    next_node: int
    destination: int
    path: tuple[int, ...]  # remaining segments after next_node
    segment: Optional[int] = None


@dataclass(frozen=True)
class FailureAction:
    vid: int
    kind: str  # "stranded", "retargeted", "rerouted"
    destination: Optional[int] = None
    path: tuple[int, ...] = ()
    strand_node: Optional[int] = None


def nearest_reachable_target(g: NetworkGraph, cm: CostModel, node: int, old_dest: int,
                             candidates: Sequence[int]) -> Optional[int]:
    """Reachable candidate closest (network metres, no failures) to old_dest; ties by id."""
    reach = distances_from(g, node, cm.failed)
    best = None
    for c in sorted(candidates):
        if c not in reach:
            continue
        d = distances_from(g, c).get(old_dest, INF)
        if best is None or d < best[0]:
            best = (d, c)
    return None if best is None else best[1]


def last_reachable_node(g: NetworkGraph, cm: CostModel, start: int, path: Sequence[int]) -> int:
    """Walk the old path from start until the first failed segment."""
    node = start
    for sid in path:
        if sid in cm.failed:
            break
        node = g.segments[sid].dst
    return node


def handle_link_failure(g: NetworkGraph, cm: CostModel, failed_seg: int,
                        vehicles: Sequence[VehicleRouteState],
                        candidates: Optional[Sequence[int]] = None) -> list[FailureAction]:
    """Reconfigure travelling vehicles after `failed_seg` became impassable.

    Returns one action per vehicle whose situation changed:
    stranded (on the failed segment, or no station reachable at all),
    retargeted (old destination unreachable; nearest reachable station in
    network distance to the old one), or rerouted (same destination, new path).
    """
    if failed_seg not in cm.failed:
        cm.fail(failed_seg)
    if candidates is None:
        candidates = g.station_ids()
    actions = []
    for vs in sorted(vehicles, key=lambda v: v.vid):
        if vs.segment == failed_seg:
            actions.append(FailureAction(vs.vid, "stranded", strand_node=None))
            continue
        found = shortest_path(g, cm, vs.next_node, vs.destination)
        if found is None:
            new_dest = nearest_reachable_target(g, cm, vs.next_node, vs.destination, candidates)
            if new_dest is None:
                actions.append(FailureAction(
                    vs.vid, "stranded",
                    strand_node=last_reachable_node(g, cm, vs.next_node, vs.path)))
                continue
            _, path = shortest_path(g, cm, vs.next_node, new_dest)
            actions.append(FailureAction(vs.vid, "retargeted", new_dest, path))
        elif found[1] != tuple(vs.path):
            actions.append(FailureAction(vs.vid, "rerouted", vs.destination, found[1]))
    return actions

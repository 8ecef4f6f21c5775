"""Guideway graph: nodes, one-way segments, sectors, validation, benchmarks."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional

from .stations import CapacitorSpec, StationLayout, StationSpec


class NodeKind(str, Enum):
    STATION = "Station"
    CAPACITOR = "Capacitor"
    FORK = "Fork"
    JOIN = "Join"


# (in-degree, out-degree) required for each node kind
DEGREES = {
    NodeKind.STATION: (1, 1),
    NodeKind.CAPACITOR: (1, 1),
    NodeKind.FORK: (1, 2),
    NodeKind.JOIN: (2, 1),
}

DEFAULT_V_LIMIT = 12.0


class ModelError(ValueError):
    """A model file that cannot be turned into a graph at all."""


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Segment:
    id: int
    src: int
    dst: int
    length: float
    v_limit: float = DEFAULT_V_LIMIT
    sector_count: int = 1

    @property
    def sector_length(self) -> float:
        return self.length / self.sector_count

    def boundary(self, k: int) -> float:
        """Offset of the k-th sector boundary (0 = segment start)."""
        if k >= self.sector_count:
            return self.length
        return self.length * k / self.sector_count


@dataclass
class NetworkGraph:
    """Directed guideway graph. Treat as immutable once built."""

    nodes: dict[int, Node]
    segments: dict[int, Segment]
    stations: dict[int, StationSpec] = field(default_factory=dict)
    capacitors: dict[int, CapacitorSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.out_segs: dict[int, list[int]] = {n: [] for n in self.nodes}
        self.in_segs: dict[int, list[int]] = {n: [] for n in self.nodes}
        for s in sorted(self.segments.values(), key=lambda s: s.id):
            if s.src in self.out_segs:
                self.out_segs[s.src].append(s.id)
            if s.dst in self.in_segs:
                self.in_segs[s.dst].append(s.id)

    def kind(self, node: int) -> NodeKind:
        return self.nodes[node].kind

    def station_ids(self) -> list[int]:
        return sorted(n for n, nd in self.nodes.items() if nd.kind is NodeKind.STATION)

    def capacitor_ids(self) -> list[int]:
        return sorted(n for n, nd in self.nodes.items() if nd.kind is NodeKind.CAPACITOR)

    def out_seg(self, node: int) -> int:
        """The single outgoing segment of a non-fork node."""
        return self.out_segs[node][0]

    def max_sector_length(self) -> float:
        return max((s.sector_length for s in self.segments.values()), default=0.0)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "position": list(n.position)}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "segments": [
                {
                    "id": s.id,
                    "from": s.src,
                    "to": s.dst,
                    "length": s.length,
                    "v_limit": s.v_limit,
                    "sector_count": s.sector_count,
                }
                for s in sorted(self.segments.values(), key=lambda s: s.id)
            ],
            "stations": {
                str(k): {
                    "layout": v.layout.value,
                    "berths": v.berths,
                    "in_buffer": v.in_buffer,
                    "out_buffer": v.out_buffer,
                    "spur_len_m": v.spur_len_m,
                }
                for k, v in sorted(self.stations.items())
            },
            "capacitors": {
                str(k): {"capacity": v.capacity, "initial_vehicles": v.initial_vehicles}
                for k, v in sorted(self.capacitors.items())
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _strict(obj: Any, where: str, required: Iterable[str], optional: Iterable[str] = ()) -> dict:
    if not isinstance(obj, dict):
        raise ModelError(f"{where}: expected an object")
    allowed = set(required) | set(optional)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ModelError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ModelError(f"{where}: missing field(s) {', '.join(missing)}")
    return obj


def graph_from_dict(doc: dict[str, Any]) -> NetworkGraph:
    """Build a graph from a model document; unknown fields are rejected.

    Segment length defaults to the Euclidean distance between its end nodes.
    """
    _strict(doc, "model", ["nodes", "segments"], ["stations", "capacitors"])
    nodes: dict[int, Node] = {}
    for i, raw in enumerate(doc["nodes"]):
        _strict(raw, f"nodes[{i}]", ["id", "kind", "position"])
        try:
            kind = NodeKind(raw["kind"])
        except ValueError:
            raise ModelError(f"nodes[{i}]: unknown kind {raw['kind']!r}") from None
        pos = raw["position"]
        if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
            raise ModelError(f"nodes[{i}]: position must be [x, y]")
        nid = int(raw["id"])
        if nid in nodes:
            raise ModelError(f"nodes[{i}]: duplicate node id {nid}")
        nodes[nid] = Node(nid, kind, (float(pos[0]), float(pos[1])))

    segments: dict[int, Segment] = {}
    for i, raw in enumerate(doc["segments"]):
        _strict(raw, f"segments[{i}]", ["id", "from", "to"], ["length", "v_limit", "sector_count"])
        sid = int(raw["id"])
        if sid in segments:
            raise ModelError(f"segments[{i}]: duplicate segment id {sid}")
        src, dst = int(raw["from"]), int(raw["to"])
        length = raw.get("length")
        if length is None:
            if src not in nodes or dst not in nodes:
                raise ModelError(f"segments[{i}]: cannot default length, unknown endpoint")
            (x0, y0), (x1, y1) = nodes[src].position, nodes[dst].position
            length = math.hypot(x1 - x0, y1 - y0)
        sc = raw.get("sector_count", 1)
        if int(sc) != sc:
            raise ModelError(f"segments[{i}]: sector_count must be an integer")
        segments[sid] = Segment(
            sid, src, dst, float(length), float(raw.get("v_limit", DEFAULT_V_LIMIT)), int(sc)
        )

    stations: dict[int, StationSpec] = {}
    for key, raw in (doc.get("stations") or {}).items():
        _strict(raw, f"stations[{key}]", [], ["layout", "berths", "in_buffer", "out_buffer", "spur_len_m"])
        try:
            layout = StationLayout(raw.get("layout", StationLayout.STUB_BERTHS.value))
        except ValueError:
            raise ModelError(f"stations[{key}]: unknown layout {raw.get('layout')!r}") from None
        stations[int(key)] = StationSpec(
            node=int(key),
            layout=layout,
            berths=int(raw.get("berths", 3)),
            in_buffer=int(raw.get("in_buffer", 2)),
            out_buffer=int(raw.get("out_buffer", 1)),
            spur_len_m=float(raw.get("spur_len_m", 20.0)),
        )

    capacitors: dict[int, CapacitorSpec] = {}
    for key, raw in (doc.get("capacitors") or {}).items():
        _strict(raw, f"capacitors[{key}]", [], ["capacity", "initial_vehicles"])
        capacitors[int(key)] = CapacitorSpec(
            node=int(key),
            capacity=int(raw.get("capacity", 50)),
            initial_vehicles=int(raw.get("initial_vehicles", 0)),
        )
    return NetworkGraph(nodes, segments, stations, capacitors)


def load_graph(path: str | Path) -> NetworkGraph:
    with open(path, encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    node: Optional[int] = None
    segment: Optional[int] = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return bool(self.violations)

    def add(self, rule: str, message: str, **kw: Any) -> None:
        self.violations.append(Violation(rule, message, **kw))

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def lines(self) -> list[str]:
        return [f"{v.rule}: {v.message}" for v in self.violations]


def _reach(adj: dict[int, list[int]], start: int) -> set[int]:
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def validate_graph(g: NetworkGraph) -> ValidationReport:
    """List every violated structural rule. Never raises."""
    rep = ValidationReport()
    if not g.nodes:
        rep.add("empty", "graph has no nodes")
        return rep

    pairs: dict[tuple[int, int], int] = {}
    for s in sorted(g.segments.values(), key=lambda s: s.id):
        if s.src not in g.nodes or s.dst not in g.nodes:
            rep.add("endpoint", f"segment {s.id} references an unknown node", segment=s.id)
            continue
        if s.src == s.dst:
            rep.add("self-loop", f"segment {s.id} is a self-loop on node {s.src}", segment=s.id)
        if (s.src, s.dst) in pairs:
            rep.add(
                "parallel",
                f"segments {pairs[(s.src, s.dst)]} and {s.id} both join {s.src}->{s.dst}",
                segment=s.id,
            )
        pairs.setdefault((s.src, s.dst), s.id)
        if not s.length > 0:
            rep.add("length", f"segment {s.id} has non-positive length {s.length}", segment=s.id)
        if not s.v_limit > 0:
            rep.add("v_limit", f"segment {s.id} has non-positive speed limit", segment=s.id)
        if s.sector_count < 1:
            rep.add("sectors", f"segment {s.id} has sector_count < 1", segment=s.id)

    for nid in sorted(g.nodes):
        kind = g.nodes[nid].kind
        want_in, want_out = DEGREES[kind]
        have_in, have_out = len(g.in_segs[nid]), len(g.out_segs[nid])
        if (have_in, have_out) != (want_in, want_out):
            rep.add(
                "degree",
                f"{kind.value} node {nid} has in/out degree {have_in}/{have_out},"
                f" expected {want_in}/{want_out}",
                node=nid,
            )

    for nid in g.station_ids():
        if nid not in g.stations:
            rep.add("station-spec", f"station node {nid} has no station record", node=nid)
    for nid in g.capacitor_ids():
        if nid not in g.capacitors:
            rep.add("capacitor-spec", f"capacitor node {nid} has no capacitor record", node=nid)
    for nid, spec in sorted(g.stations.items()):
        if nid not in g.nodes or g.nodes[nid].kind is not NodeKind.STATION:
            rep.add("station-spec", f"station record {nid} does not name a station node", node=nid)
        for p in spec.problems():
            rep.add("station-spec", p, node=nid)
    for nid, spec in sorted(g.capacitors.items()):
        if nid not in g.nodes or g.nodes[nid].kind is not NodeKind.CAPACITOR:
            rep.add("capacitor-spec", f"capacitor record {nid} does not name a capacitor node", node=nid)
        for p in spec.problems():
            rep.add("capacitor-spec", p, node=nid)

    fwd: dict[int, list[int]] = {n: [] for n in g.nodes}
    bwd: dict[int, list[int]] = {n: [] for n in g.nodes}
    for s in g.segments.values():
        if s.src in g.nodes and s.dst in g.nodes:
            fwd[s.src].append(s.dst)
            bwd[s.dst].append(s.src)
    root = min(g.nodes)
    down, up = _reach(fwd, root), _reach(bwd, root)
    for nid in sorted(g.nodes):
        if nid not in down:
            rep.add("connectivity", f"node {nid} is not reachable from node {root}", node=nid)
        elif nid not in up:
            rep.add("connectivity", f"node {root} is not reachable from node {nid}", node=nid)
    return rep


# -- sectors ----------------------------------------------------------------


def default_sector_len(separation: float, factor: float = 2.5) -> float:
    """Sector length a few times shorter than the planned separation."""
    if not factor > 0:
        raise ValueError(f"sector factor must be positive, got {factor}")
    if not separation > 0:
        raise ValueError(f"separation must be positive, got {separation}")
    return separation / factor


def sector_count_for(length: float, target_sector_len: float) -> int:
    return max(1, int(math.floor(length / target_sector_len + 0.5)))


def sectorize(g: NetworkGraph, target_sector_len: float) -> NetworkGraph:
    if not target_sector_len > 0:
        raise ValueError("target sector length must be positive")
    segs = {
        sid: replace(s, sector_count=sector_count_for(s.length, target_sector_len))
        for sid, s in g.segments.items()
    }
    return NetworkGraph(dict(g.nodes), segs, dict(g.stations), dict(g.capacitors))


# -- benchmarks -------------------------------------------------------------


class _Builder:
    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self.segments: dict[int, Segment] = {}
        self.stations: dict[int, StationSpec] = {}
        self.capacitors: dict[int, CapacitorSpec] = {}

    def node(self, kind: NodeKind, x: float, y: float) -> int:
        nid = len(self.nodes)
        self.nodes[nid] = Node(nid, kind, (round(x, 6), round(y, 6)))
        return nid

    def station(self, x: float, y: float, **spec: Any) -> int:
        nid = self.node(NodeKind.STATION, x, y)
        if "layout" in spec:
            spec = {**spec, "layout": StationLayout(spec["layout"])}
        self.stations[nid] = StationSpec(node=nid, **spec)
        return nid

    def capacitor(self, x: float, y: float, capacity: int) -> int:
        nid = self.node(NodeKind.CAPACITOR, x, y)
        self.capacitors[nid] = CapacitorSpec(node=nid, capacity=capacity)
        return nid

    def seg(self, a: int, b: int, length: Optional[float] = None, v_limit: float = DEFAULT_V_LIMIT) -> int:
        sid = len(self.segments)
        if length is None:
            (x0, y0), (x1, y1) = self.nodes[a].position, self.nodes[b].position
            length = math.hypot(x1 - x0, y1 - y0)
        self.segments[sid] = Segment(sid, a, b, round(float(length), 6), v_limit)
        return sid

    def build(self) -> NetworkGraph:
        return NetworkGraph(self.nodes, self.segments, self.stations, self.capacitors)


def grid_station_count(rows: int, cols: int) -> int:
    """Stations in a RectGrid benchmark: one per block between intersections."""
    return rows * (cols - 1) + cols * (rows - 1)


def _ring(n_stations: int = 4, spacing: float = 200.0, capacity: int = 50,
          v_limit: float = DEFAULT_V_LIMIT, **station: Any) -> NetworkGraph:
    if n_stations < 2:
        raise ValueError("ring needs at least 2 stations")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    b = _Builder()
    radius = n_stations * spacing / (2 * math.pi)
    step = 2 * math.pi / n_stations
    ids = [
        b.station(radius * math.cos(k * step), radius * math.sin(k * step), **station)
        for k in range(n_stations)
    ]
    ang = (n_stations - 0.5) * step
    cap = b.capacitor(radius * math.cos(ang), radius * math.sin(ang), capacity)
    for k in range(n_stations - 1):
        b.seg(ids[k], ids[k + 1], spacing, v_limit)
    b.seg(ids[-1], cap, spacing / 2, v_limit)
    b.seg(cap, ids[0], spacing / 2, v_limit)
    return b.build()


def _linear(n_stations: int = 3, spacing: float = 500.0, turn_len: float = 60.0,
            capacity: int = 50, v_limit: float = DEFAULT_V_LIMIT,
            crossovers: Iterable[int] = (), crossover_len: float = 40.0,
            **station: Any) -> NetworkGraph:
    if n_stations < 2:
        raise ValueError("linear corridor needs at least 2 station locations")
    if not (spacing > 0 and turn_len > 0 and crossover_len > 0):
        raise ValueError("spacing, turn_len and crossover_len must be positive")
    crossovers = sorted(set(int(i) for i in crossovers))
    if any(not 0 <= i < n_stations - 1 for i in crossovers):
        raise ValueError(f"crossover locations must lie in 0..{n_stations - 2}")
    b = _Builder()
    gap = 10.0
    east = [b.station(i * spacing, 0.0, **station) for i in range(n_stations)]
    west = [b.station(i * spacing, gap, **station) for i in range(n_stations)]
    cap = b.capacitor(-turn_len / 2, gap / 2, capacity)
    # a crossover at location i: fork midway E_i -> E_i+1, join midway W_i+1 -> W_i
    fork = {i: b.node(NodeKind.FORK, (i + 0.5) * spacing, 0.0) for i in crossovers}
    join = {i: b.node(NodeKind.JOIN, (i + 0.5) * spacing, gap) for i in crossovers}
    half = spacing / 2
    for i in range(n_stations - 1):
        if i in fork:
            b.seg(east[i], fork[i], half, v_limit)
            b.seg(fork[i], east[i + 1], half, v_limit)
        else:
            b.seg(east[i], east[i + 1], spacing, v_limit)
    b.seg(east[-1], west[-1], turn_len, v_limit)
    for i in range(n_stations - 1, 0, -1):
        if i - 1 in join:
            b.seg(west[i], join[i - 1], half, v_limit)
            b.seg(join[i - 1], west[i - 1], half, v_limit)
        else:
            b.seg(west[i], west[i - 1], spacing, v_limit)
    b.seg(west[0], cap, turn_len / 2, v_limit)
    b.seg(cap, east[0], turn_len / 2, v_limit)
    for i in crossovers:
        b.seg(fork[i], join[i], crossover_len, v_limit)
    return b.build()


def _grid(rows: int = 2, cols: int = 2, block: float = 200.0, link_len: float = 20.0,
          link_v_limit: float = 8.0, capacity: int = 50,
          v_limit: float = DEFAULT_V_LIMIT, **station: Any) -> NetworkGraph:
    if rows < 2 or cols < 2:
        raise ValueError("grid rows and cols must be >= 2")
    if not (block > 2 * link_len and link_len > 0):
        raise ValueError("block must exceed twice the interchange link length")
    b = _Builder()
    join: dict[tuple[int, int], int] = {}
    fork: dict[tuple[int, int], int] = {}
    for i in range(rows):
        for j in range(cols):
            join[i, j] = b.node(NodeKind.JOIN, j * block, i * block)
    for i in range(rows):
        for j in range(cols):
            fork[i, j] = b.node(NodeKind.FORK, j * block + 0.5, i * block + 0.5)
    for i in range(rows):
        for j in range(cols):
            b.seg(join[i, j], fork[i, j], link_len, link_v_limit)

    lines: list[list[tuple[int, int]]] = []
    for i in range(rows):
        order = [(i, j) for j in range(cols)]
        lines.append(order if i % 2 == 0 else order[::-1])
    for j in range(cols):
        order = [(i, j) for i in range(rows)]
        lines.append(order if j % 2 == 0 else order[::-1])

    inner_len = block - link_len
    stations = []
    for line in lines:
        for a, c in zip(line, line[1:]):
            (xa, ya), (xc, yc) = b.nodes[fork[a]].position, b.nodes[join[c]].position
            st = b.station((xa + xc) / 2, (ya + yc) / 2, **station)
            stations.append(st)
            b.seg(fork[a], st, inner_len / 2, v_limit)
            b.seg(st, join[c], inner_len / 2, v_limit)
    wrap_len = cols * block
    for k, line in enumerate(lines):
        last, first = line[-1], line[0]
        if k == 0:
            (xa, ya) = b.nodes[fork[last]].position
            cap = b.capacitor(xa + block / 2, ya - block / 2, capacity)
            b.seg(fork[last], cap, wrap_len / 2, v_limit)
            b.seg(cap, join[first], wrap_len / 2, v_limit)
        else:
            b.seg(fork[last], join[first], wrap_len, v_limit)
    return b.build()


def _center_periphery(spokes: int = 4, radius: float = 600.0, hub_radius: float = 60.0,
                      capacity: int = 50, v_limit: float = DEFAULT_V_LIMIT,
                      **station: Any) -> NetworkGraph:
    if spokes < 2:
        raise ValueError("center-periphery needs at least 2 spokes")
    if not radius > 2 * hub_radius > 0:
        raise ValueError("radius must exceed the hub diameter")
    b = _Builder()
    n_loop = 2 * spokes + 2
    step = 2 * math.pi / n_loop

    def at(k: int) -> tuple[float, float]:
        return hub_radius * math.cos(k * step), hub_radius * math.sin(k * step)

    loop = [b.station(*at(0), **station)]
    forks, joins = [], []
    for k in range(spokes):
        forks.append(b.node(NodeKind.FORK, *at(1 + 2 * k)))
        joins.append(b.node(NodeKind.JOIN, *at(2 + 2 * k)))
        loop += [forks[-1], joins[-1]]
    loop.append(b.capacitor(*at(n_loop - 1), capacity))
    arc = 2 * math.pi * hub_radius / n_loop
    for a, c in zip(loop, loop[1:] + loop[:1]):
        b.seg(a, c, arc, v_limit)
    for k in range(spokes):
        ang = (1.5 + 2 * k) * step
        p = b.station(radius * math.cos(ang), radius * math.sin(ang), **station)
        b.seg(forks[k], p, radius - hub_radius, v_limit)
        b.seg(p, joins[k], radius - hub_radius, v_limit)
    return b.build()


BENCHMARKS = {
    "Ring": _ring,
    "Linear": _linear,
    "RectGrid": _grid,
    "CenterPeriphery": _center_periphery,
}


def generate_benchmark(kind: str, **params: Any) -> NetworkGraph:
    """Build one of the four benchmark layouts.

    Ring(n_stations, spacing): stations on one loop with a capacitor.
    Linear(n_stations, spacing, turn_len, crossovers, crossover_len): an
        east/west pair of one-way lines joined at both ends; each location has
        one station per direction. Each crossover location i adds a fork on
        the eastbound line between locations i and i+1 and a short link to a
        join on the westbound line.
    RectGrid(rows, cols, block, link_len): alternating one-way lines that wrap
        around the edge; every crossing is a join feeding a fork, and one
        station sits in the middle of each block, see grid_station_count().
    CenterPeriphery(spokes, radius, hub_radius): a hub loop with one station
        and one capacitor, plus an out-and-back spoke to a peripheral station.
    """
    try:
        build = BENCHMARKS[kind]
    except KeyError:
        raise ValueError(f"unknown benchmark {kind!r}; choose from {sorted(BENCHMARKS)}") from None
    if "layout" in params and not isinstance(params["layout"], StationLayout):
        params["layout"] = StationLayout(params["layout"])
    try:
        g = build(**params)
    except TypeError as exc:
        raise ValueError(str(exc)) from None
    rep = validate_graph(g)
    assert rep.ok, rep.lines()
    return g

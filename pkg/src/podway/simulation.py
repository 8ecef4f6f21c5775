"""One replication: vehicles on sectors, stations, fleet and demand on the event buffer.

Vehicles re-plan only at sector boundaries. A plan covers the stretch to the
next boundary and honours every constraint found by a forward search of the
route within the lookahead distance: the vehicle in front, speed limits,
merge grants at joins, station admission and failed segments. Because a plan
is feasible for everything visible ahead, a committed plan never has to be
cancelled; a vehicle that cannot move waits until whatever blocks it changes.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from .demand import DemandStream, Outcome, PassengerGroup, window_at
from .fleet import (EmptyTripTo, IdleVehicle, allocate_vehicle, evict_for_arrival,
                    nearest_capacitor, on_vehicle_released)
from .kernel import Event, EventBuffer, EventKind as K, InvariantBreach, ReplicationConfig, US, to_us
from .metrics import Metrics, MetricsAccumulator, UM
from .motion import (Constraint, KeepingRule, MergeRule, Profile, SectorPlan, min_trip_time,
                     plan_sector_transit, stretch_time)
from .network import NodeKind
from .routing import (FailureAction, Router, VehicleRouteState, handle_link_failure,
                      nearest_reachable_target)
from .scenario import Scenario
from .stations import Admission, CapacitorState, StationState

ROOM_EPS = 1e-3  # metres of free room below which a stopped vehicle waits
SEP_TOL = 1e-6  # metres of slack in separation checks


class Vehicle:
    __slots__ = (
        "vid", "where", "node", "seg", "x", "v", "plan", "path", "dest", "group", "assigned",
        "purpose", "transit", "full_um", "empty_um", "trip_segs", "trip_um", "grants",
        "admission", "waiting", "forks_done", "stranding", "stranded", "strand_node",
        "token", "place", "idle_since", "target",
    )

    def __init__(self, vid: int):
        self.vid = vid
        self.where = "capacitor"  # "track", "station" or "capacitor"
        self.node: Optional[int] = None  # station or capacitor holding the vehicle
        self.seg: Optional[int] = None
        self.x = 0.0  # offset on seg at the end of the committed plan
        self.v = 0.0
        self.plan: Optional[SectorPlan] = None
        self.path: list[int] = []  # segments after seg (off track: the whole route)
        self.dest: Optional[int] = None
        self.group: Optional[int] = None
        self.assigned: Optional[int] = None  # station whose call this vehicle answers
        self.purpose = ""  # "trip", "pickup", "park", "rebalance"
        self.transit = False  # passing through an in-line station
        self.full_um = 0
        self.empty_um = 0
        self.trip_segs: list[int] = []
        self.trip_um = 0
        self.grants: set[int] = set()
        self.admission: Optional[tuple[int, Admission]] = None
        self.waiting: Optional[tuple[str, int]] = None
        self.forks_done: set[int] = set()
        self.stranding = False
        self.stranded = False
        self.strand_node: Optional[int] = None
        self.token = 0
        self.place: Optional[str] = None  # "berth", "in_buffer", "out_buffer", "spur", "slot"
        self.idle_since: Optional[int] = None
        self.target = 0.0  # offset where the committed plan ends

    @property
    def loaded(self) -> bool:
        return self.group is not None


@dataclass
class Diagnostics:
    separation_checks: int = 0
    separation_violations: int = 0
    emergency_brakes: int = 0
    events: int = 0
    first_violation: Optional[str] = None


@dataclass
class RunOutput:
    metrics: Metrics
    trace: Optional[list[dict[str, Any]]]
    trips: list[dict[str, Any]]
    diagnostics: Diagnostics
    vehicles: int = 0
    odometer_um: int = 0


_REST = Profile((), 0.0, 0.0, 0.0, True)
_TOKENED = frozenset({K.SECTOR_BOUNDARY, K.HALT, K.RESUME})


def _rest_plan(t: int, x: float) -> SectorPlan:
    return SectorPlan(t, x, _REST, end_us=t)


def _held_plan(t: int, x: float, v: float) -> SectorPlan:
    """Zero-length plan pinning a vehicle's state between two commitments."""
    if v == 0.0:
        return _rest_plan(t, x)
    return SectorPlan(t, x, Profile((), 0.0, v, 0.0, False), end_us=t)


class Simulation:
    def __init__(self, sc: Scenario, cfg: Optional[ReplicationConfig] = None,
                 on_event: Optional[Callable[["Simulation", Event], None]] = None):
        self.sc = sc
        self.cfg = cfg or sc.run
        self.g = sc.graph
        self.spec = sc.spec
        self.b = sc.spec.b_max
        self.rule = sc.rule
        self.lam = sc.lookahead()
        self.t_shift = {s: to_us(spec.spur_len_m / sc.station_speed) for s, spec in self.g.stations.items()}
        self.costs = copy.deepcopy(sc.costs)
        self.router = Router(self.g, self.costs)
        self.buf = EventBuffer()
        self.on_event = on_event
        self.diag = Diagnostics()

        self.on_seg: dict[int, list[Vehicle]] = {sid: [] for sid in self.g.segments}
        self.stations = {s: StationState(self.g.stations[s]) for s in self.g.station_ids()}
        self.capacitors = {c: CapacitorState(self.g.capacitors[c]) for c in self.g.capacitor_ids()}
        self.vehicles: list[Vehicle] = [Vehicle(i) for i in range(sc.fleet_size)]
        self.idle: dict[int, IdleVehicle] = {}
        self.park_inbound = {c: 0 for c in self.capacitors}
        self.evicting: dict[int, int] = {}
        self.groups: dict[int, PassengerGroup] = {}
        self.group_times: dict[int, tuple[float, float]] = {}  # board, alight seconds
        self.alive: set[int] = set()
        self.next_gid = 0

        # merge order per join: granted vehicles that have not crossed yet
        self.join_order: dict[int, list[int]] = {
            n: [] for n, nd in self.g.nodes.items() if nd.kind is NodeKind.JOIN}
        self.gate_waiters: dict[int, list[int]] = {n: [] for n in self.g.nodes}
        self.watchers: dict[int, set[int]] = {}
        self.seg_waiters: dict[int, set[int]] = {}
        self.exit_q: dict[int, deque[Vehicle]] = {
            n: deque() for n in list(self.stations) + list(self.capacitors)}
        self.exit_watch = self._exit_watch_map()
        self.dirty_gates: set[int] = set()
        self.dirty_exits: set[int] = set()
        self.station_blocked: dict[int, list[int]] = {s: [] for s in self.stations}

        self.occ_ema: dict[int, float] = {sid: 0.0 for sid in self.g.segments}
        self.occ_t: dict[int, int] = {sid: 0 for sid in self.g.segments}

        self.streams = {s: DemandStream(sc.demand, s, self.cfg.seed) for s in self.stations}
        self.arrival_token = {s: 0 for s in self.stations}

        self.registration = sc.registration
        self.trace: Optional[list[dict[str, Any]]] = [] if self.cfg.trace else None
        self.acc = MetricsAccumulator(self.g.station_ids(), self.cfg.horizon_us,
                                      self.cfg.warmup_us, sc.probe_node)
        self.failure_log: list[tuple[int, int, list[FailureAction]]] = []
        self._current: Optional[Event] = None
        self.now = 0

    # -- records --------------------------------------------------------------

    def _record(self, rec: dict[str, Any]) -> None:
        self.acc.feed(rec)
        if self.trace is not None and (self.registration is None or rec["kind"] in self.registration):
            self.trace.append(rec)

    def emit(self, kind: K, vehicle: Optional[int] = None, group: Optional[int] = None,
             node: Optional[int] = None, segment: Optional[int] = None,
             detail: Optional[dict[str, Any]] = None) -> None:
        """Record an instantaneous event at the current time."""
        rec: dict[str, Any] = {"t_us": self.now, "seq": self.buf.next_seq(), "kind": kind.value}
        if vehicle is not None:
            rec["vehicle"] = vehicle
        if group is not None:
            rec["group"] = group
        if node is not None:
            rec["node"] = node
        if segment is not None:
            rec["segment"] = segment
        if detail:
            rec["detail"] = detail
        self._record(rec)

    def schedule(self, t: int, kind: K, **kw: Any) -> Event:
        return self.buf.schedule(Event(t, kind, **kw))

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunOutput:
        self._start()
        horizon = self.cfg.horizon_us
        handlers = self._handlers()
        while self.buf:
            e = self.buf.pop()
            if e.t > horizon:
                break
            self.now = e.t
            self._current = e
            if e.kind is K.SIM_END:
                self._record(e.to_record())
                break
            if e.vehicle is not None and e.token != self.vehicles[e.vehicle].token and e.kind in _TOKENED:
                continue
            if e.kind is K.NEXT_ARRIVAL_DUE and e.token != self.arrival_token[e.node]:
                continue
            if e.kind is K.RENEGE and e.group not in self.stations[e.node].queue:
                continue
            self.diag.events += 1
            self._record(e.to_record())
            handlers[e.kind](e)
            self._post()
            if self.on_event is not None:
                self.on_event(self, e)
        self._current = None
        return self._finish()

    def _handlers(self) -> dict[K, Callable[[Event], None]]:
        return {
            K.NEXT_ARRIVAL_DUE: self._on_arrival_due,
            K.WINDOW_CHANGE: self._on_window_change,
            K.RENEGE: self._on_renege,
            K.BOARD_END: self._on_board_end,
            K.ALIGHT_END: self._on_alight_end,
            K.BERTH_ENTER: self._on_berth_enter,
            K.BUFFER_ENTER: self._on_buffer_enter,
            K.SECTOR_BOUNDARY: self._on_plan_end,
            K.HALT: self._on_plan_end,
            K.RESUME: self._on_resume,
            K.LINK_FAIL: self._on_link_fail,
            K.LINK_RESTORE: self._on_link_restore,
        }

    def _post(self) -> None:
        # settle gates and exits until nothing changes; order is by node id
        while self.dirty_gates or self.dirty_exits:
            if self.dirty_gates:
                node = min(self.dirty_gates)
                self.dirty_gates.discard(node)
                self._retry_gate(node)
                continue
            node = min(self.dirty_exits)
            self.dirty_exits.discard(node)
            self._try_exits(node)

    def breach(self, message: str) -> InvariantBreach:
        return InvariantBreach(message, self._current)

    # -- setup and teardown ---------------------------------------------------

    def _start(self) -> None:
        sc = self.sc
        self.schedule(self.cfg.horizon_us, K.SIM_END)
        self._place_fleet()
        for s in self.stations:
            self._arm_arrivals(s, 0.0)
            for w in sc.demand.profiles[s]:
                if 0 < w.start < self.cfg.horizon:
                    self.schedule(to_us(w.start), K.WINDOW_CHANGE, node=s)
        for f in sc.failures:
            if f.t_fail <= self.cfg.horizon:
                self.schedule(to_us(f.t_fail), K.LINK_FAIL, segment=f.segment)
            if f.t_restore is not None and f.t_restore <= self.cfg.horizon:
                self.schedule(to_us(f.t_restore), K.LINK_RESTORE, segment=f.segment)

    def _place_fleet(self) -> None:
        vids = [v.vid for v in self.vehicles]
        if self.sc.placement == "stations":
            # berths fill round-robin across stations; the rest start in capacitors
            slots = [(s, i) for i in range(max((st.spec.berths for st in self.stations.values()), default=0))
                     for s in sorted(self.stations) if i < self.stations[s].spec.berths]
            for vid, (s, i) in zip(vids, slots):
                st = self.stations[s]
                v = self.vehicles[vid]
                v.where, v.node, v.place = "station", s, "berth"
                st.berths[i] = vid
                self._set_idle(v, s)
            vids = vids[len(slots):]
        caps = sorted(self.capacitors)
        k = 0
        for vid in vids:
            for _ in range(len(caps)):
                c = caps[k % len(caps)]
                k += 1
                if self.capacitors[c].free_slots() > 0:
                    break
            else:
                raise self.breach("fleet does not fit the berths and capacitors")
            v = self.vehicles[vid]
            v.where, v.node, v.place = "capacitor", c, "slot"
            self.capacitors[c].store(vid, reserved=False)
            self._set_idle(v, c)

    def _located(self) -> int:
        """Vehicles found in a physical place; each must be in exactly one."""
        where = [vid for lst in self.on_seg.values() for vid in (u.vid for u in lst)]
        for st in self.stations.values():
            where += [b for b in st.berths if b is not None]
            where += list(st.in_buffer) + list(st.out_buffer)
        for cap in self.capacitors.values():
            where += cap.stored
        where += [v.vid for v in self.vehicles if v.where == "station" and v.place == "spur"]
        if len(where) != len(set(where)):
            raise self.breach("a vehicle is in two places at once")
        return len(where)

    def _finish(self) -> RunOutput:
        self.now = max(self.now, min(self.buf.now, self.cfg.horizon_us))
        count = self._located()
        if count != self.sc.fleet_size:
            raise self.breach(f"{count} vehicles located, fleet is {self.sc.fleet_size}")
        metrics = self.acc.summarize(groups_in_system=len(self.alive))
        self.diag.emergency_brakes = metrics.emergency_brakes
        trips = [tr.__dict__.copy() for tr in self.acc.all_trips]
        odo = sum(v.full_um + v.empty_um for v in self.vehicles)
        return RunOutput(metrics, self.trace, trips, self.diag, count, odo)

    # -- demand -----------------------------------------------------------------

    def _arm_arrivals(self, s: int, t: float, restart: bool = True) -> None:
        """Schedule the next arrival at s drawn from the intensity in force at t.

        A restart (window change) voids the pending draw; memorylessness makes
        redrawing from the new intensity exact.
        """
        if restart:
            self.arrival_token[s] += 1
        w = window_at(self.sc.demand.profiles[s], t)
        if w is None or w.lam <= 0:
            return
        at = to_us(t + self.streams[s].next_gap(w.lam))
        if at <= self.cfg.horizon_us:
            self.schedule(at, K.NEXT_ARRIVAL_DUE, node=s, token=self.arrival_token[s])

    def _on_window_change(self, e: Event) -> None:
        self._arm_arrivals(e.node, e.t / US)

    def _on_arrival_due(self, e: Event) -> None:
        s = e.node
        stream = self.streams[s]
        t_s = e.t / US
        gid = self.next_gid
        self.next_gid += 1
        dest = stream.destination(t_s)
        size = stream.group_size()
        self.group_times[gid] = (stream.board_time(), stream.alight_time())
        self.groups[gid] = PassengerGroup(gid, size, s, dest, e.t)
        self.alive.add(gid)
        self.emit(K.GROUP_APPEARS, group=gid, node=s, detail={"destination": dest, "size": size})
        self.stations[s].enqueue_group(gid)
        self.emit(K.QUEUE_JOIN, group=gid, node=s)
        if self.sc.demand.renege_timeout is not None:
            self.schedule(e.t + to_us(self.sc.demand.renege_timeout), K.RENEGE, group=gid, node=s)
        self._arm_arrivals(s, t_s, restart=False)
        self._dispatch()

    def _on_renege(self, e: Event) -> None:
        gid = e.group
        self.stations[e.node].remove_group(gid)
        self.groups[gid].outcome = Outcome.RENEGED
        self.alive.discard(gid)
        self.emit(K.QUEUE_LEAVE, group=gid, node=e.node)

    # -- kinematics -------------------------------------------------------------

    def pos(self, v: Vehicle) -> tuple[float, float]:
        """(offset, speed) of a track vehicle now."""
        return v.plan.state_at(self.now)

    @property
    def _min_gap(self) -> float:
        """Bumper-to-bumper distance that must always remain to a leader."""
        return self.spec.s_static if self.rule is KeepingRule.OPTIMAL else 0.0

    def _target(self, d_leader: float, v_leader: float) -> float:
        """Furthest stop point allowed behind a leader whose front is d_leader ahead."""
        if self.rule is KeepingRule.OPTIMAL:
            return d_leader + v_leader * v_leader / (2 * self.b) - self.spec.length - self.spec.s_static
        return d_leader - self.spec.length

    def _behind(self, leader: Vehicle, d_leader: float, v_leader: float) -> Constraint:
        return Constraint(self._target(d_leader, v_leader), 0.0, source=leader.vid)

    def _stops_at(self, v: Vehicle, node: int, path_done: bool) -> bool:
        if path_done and node == v.dest:
            return True
        st = self.stations.get(node)
        return st is not None and st.in_line

    def _leader_on_seg(self, v: Vehicle) -> Optional[Vehicle]:
        lst = self.on_seg[v.seg]
        i = lst.index(v)
        return lst[i - 1] if i else None

    def _scan(self, v: Vehicle, seg_id: int, x: float, path: list[int],
              leader: Optional[Vehicle], probe: bool = False) -> list[Constraint]:
        """Constraints ahead of a front at offset x on seg_id, following path.

        Distances are measured from x. With probe set nothing is requested
        or rerouted, so the search has no side effects.
        """
        g = self.g
        cons: list[Constraint] = []
        # the nearest vehicle ahead stands in for everything beyond it while it keeps to our route
        front = leader
        if leader is not None:
            lx, lv = self.pos(leader)
            cons.append(self._behind(leader, lx - x, lv))
        seg = g.segments[seg_id]
        acc = seg.length - x
        node = seg.dst
        k = 0
        while acc <= self.lam:
            if node == v.strand_node:
                cons.append(Constraint(acc, 0.0, tag="strand"))
                break
            if self._stops_at(v, node, k == len(path)):
                self._station_gate(v, node, acc, k, cons, probe)
                break
            if k == len(path):
                break
            kind = g.kind(node)
            if kind is NodeKind.FORK:
                if self.sc.rerouting and not probe and node not in v.forks_done:
                    self._reroute_at_fork(v, node, k, path)
                other = next(s for s in g.out_segs[node] if s != path[k])
                side = self.on_seg[other]
                if side:
                    r = side[-1]
                    rx, rv = self.pos(r)
                    if rx < self.spec.length:
                        cons.append(self._behind(r, acc + rx, rv))
            nxt = path[k]
            if front is not None and not self._continues(front, path[k - 1] if k else seg_id, nxt):
                front = None
            if nxt in self.costs.failed:
                cons.append(Constraint(acc, 0.0, tag=f"seg:{nxt}"))
                break
            if kind is NodeKind.JOIN:
                if node not in v.grants and not probe and k <= 1:
                    self._request_join(v, node)
                if node in v.grants:
                    pred = self._join_pred(node, v.vid)
                    if pred is not None:
                        px, pv = self.pos(pred)
                        cons.append(self._behind(pred, acc + self._rel(pred, node, px), pv))
                else:
                    # hold one safe gap short so anything may still merge in front
                    cons.append(Constraint(acc + self._target(0.0, 0.0), 0.0, tag=f"gate:{node}"))
            nseg = g.segments[nxt]
            cons.append(Constraint(acc, min(self.spec.v_max, nseg.v_limit), tag="limit"))
            if front is None and self.on_seg[nxt]:
                front = self.on_seg[nxt][-1]
                rx, rv = self.pos(front)
                cons.append(self._behind(front, acc + rx, rv))
            acc += nseg.length
            node = nseg.dst
            k += 1
        return cons

    def _continues(self, u: Vehicle, seg_in: int, nxt: int) -> bool:
        """Will u go on from seg_in straight onto nxt?"""
        route = [u.seg] + u.path
        if seg_in not in route:
            return False
        i = route.index(seg_in)
        if self._stops_at(u, self.g.segments[seg_in].dst, i == len(route) - 1):
            return False
        return i + 1 < len(route) and route[i + 1] == nxt

    def _station_gate(self, v: Vehicle, node: int, acc: float, k: int,
                      cons: list[Constraint], probe: bool) -> None:
        if not self._admitted(v, node) and not probe and k == 0:
            self._request_admission(v, node)
        if self._admitted(v, node):
            cons.append(Constraint(acc, self.sc.station_speed, tag="arrive"))
        else:
            cons.append(Constraint(acc, 0.0, tag=f"gate:{node}"))

    def _admitted(self, v: Vehicle, node: int) -> bool:
        return v.admission is not None and v.admission[0] == node

    def _reroute_at_fork(self, v: Vehicle, node: int, k: int, path: list[int]) -> None:
        v.forks_done.add(node)
        found = self.router.path(node, v.dest)
        if found is not None and list(found[1]) != path[k:]:
            path[k:] = found[1]

    def _plan(self, v: Vehicle) -> None:
        """Commit the next stretch for a track vehicle standing at (v.x, v.v)."""
        g = self.g
        seg = g.segments[v.seg]
        if v.x >= seg.length:
            if not self._try_cross(v):
                return
            seg = g.segments[v.seg]
        sl = seg.sector_length
        kb = min(int(v.x / sl + 1e-9) + 1, seg.sector_count)
        target = seg.boundary(kb)
        if target <= v.x:
            target = seg.length
        leader = self._leader_on_seg(v)
        cons = self._scan(v, v.seg, v.x, v.path, leader)
        if v.stranding:
            cons.append(Constraint(v.v * v.v / (2 * self.b), 0.0, tag="strand"))
        cap = min(self.spec.v_max, seg.v_limit)
        res = plan_sector_transit(v.v, target - v.x, cap, cons, self.spec)
        prof = res.profile
        if v.v == 0.0 and prof.distance < ROOM_EPS and (prof.halts or res.emergency):
            v.plan = _rest_plan(self.now, v.x)
            v.target = v.x
            self._wait(v, res.binding)
            return
        end = self.now + to_us(prof.duration)
        v.plan = SectorPlan(self.now, v.x, prof, res.emergency, res.binding, end)
        v.target = v.x + prof.distance if prof.halts else target
        kind = K.HALT if prof.halts else K.SECTOR_BOUNDARY
        self.schedule(end, kind, vehicle=v.vid, segment=v.seg, token=v.token,
                      detail={"dist_um": int(round(prof.distance * UM)), "loaded": v.loaded})
        if res.emergency:
            b = res.binding
            self.emit(K.EMERGENCY_BRAKE, vehicle=v.vid, segment=v.seg,
                      detail={"source": b.source if b else None, "tag": b.tag if b else ""})
        self._check_plan(v, leader)
        self._plan_changed(v)

    def _plan_changed(self, v: Vehicle) -> None:
        self._wake_watchers(v)
        for j in v.grants:
            self.dirty_gates.add(j)
        for n in self.exit_watch.get(v.seg, ()):
            self.dirty_exits.add(n)

    def _on_plan_end(self, e: Event) -> None:
        v = self.vehicles[e.vehicle]
        d = e.detail["dist_um"]
        if v.loaded:
            v.full_um += d
            v.trip_um += d
        else:
            v.empty_um += d
        v.x = v.target
        v.v = v.plan.profile.v_end
        v.plan = _rest_plan(self.now, v.x) if v.v == 0.0 else v.plan
        self._plan(v)

    def _on_resume(self, e: Event) -> None:
        self._plan(self.vehicles[e.vehicle])

    # -- waiting ----------------------------------------------------------------

    def _wait(self, v: Vehicle, binding: Optional[Constraint]) -> None:
        if v.stranding:
            v.stranding = False
            v.stranded = True
            v.waiting = ("strand", v.seg)
            return
        if binding is None:
            raise self.breach(f"vehicle {v.vid} stopped with nothing ahead")
        if binding.source is not None:
            self.watchers.setdefault(binding.source, set()).add(v.vid)
            v.waiting = ("veh", binding.source)
        elif binding.tag.startswith("gate:"):
            n = int(binding.tag[5:])
            if v.vid not in self.gate_waiters[n]:
                self.gate_waiters[n].append(v.vid)
            v.waiting = ("gate", n)
        elif binding.tag.startswith("seg:"):
            sid = int(binding.tag[4:])
            self.seg_waiters.setdefault(sid, set()).add(v.vid)
            v.waiting = ("seg", sid)
        elif binding.tag == "strand":
            v.waiting = ("strand", v.strand_node if v.strand_node is not None else -1)
        else:
            raise self.breach(f"vehicle {v.vid} stopped by a {binding.tag!r} constraint")

    def wake(self, v: Vehicle) -> None:
        if v.waiting is None or v.where != "track":
            return
        v.waiting = None
        v.token += 1
        self.schedule(self.now, K.RESUME, vehicle=v.vid, segment=v.seg, token=v.token)

    def _wake_watchers(self, v: Vehicle) -> None:
        for w in sorted(self.watchers.pop(v.vid, ())):
            u = self.vehicles[w]
            if u.waiting == ("veh", v.vid):
                self.wake(u)

    def _wake_all(self) -> None:
        for u in self.vehicles:
            if u.waiting is not None and u.waiting[0] != "strand":
                self.wake(u)

    # -- nodes ------------------------------------------------------------------

    def _gate_clear(self, v: Vehicle, node: int) -> bool:
        """May a vehicle standing at the end of its segment pass node now?"""
        if node == v.strand_node:
            return False
        if self._stops_at(v, node, not v.path):
            return self._admitted(v, node)
        if v.path[0] in self.costs.failed:
            return False
        if self.g.kind(node) is NodeKind.JOIN:
            return node in v.grants
        return True

    def _try_cross(self, v: Vehicle) -> bool:
        """Cross the node at the end of the segment; False if the vehicle waits or left the track."""
        node = self.g.segments[v.seg].dst
        if not self._gate_clear(v, node):
            # requests happen inside the scan
            self._scan(v, v.seg, v.x, v.path, self._leader_on_seg(v))
            if not self._gate_clear(v, node):
                if v.v > 0:
                    raise self.breach(f"vehicle {v.vid} reached node {node} at speed without clearance")
                v.plan = _rest_plan(self.now, v.x)
                v.target = v.x
                self._wait(v, self._gate_constraint(v, node))
                return False
        if v.v == 0.0:
            # a standing vehicle crosses only if the track beyond has room for it
            cons = self._scan(v, v.seg, v.x, v.path, self._leader_on_seg(v), probe=True)
            blocking = [c for c in cons if c.source is not None and c.d < ROOM_EPS]
            if blocking:
                v.plan = _rest_plan(self.now, v.x)
                v.target = v.x
                self._wait(v, min(blocking, key=lambda c: c.d))
                return False
        self._cross(v, node)
        return v.where == "track"

    def _gate_constraint(self, v: Vehicle, node: int) -> Constraint:
        if node == v.strand_node:
            return Constraint(0.0, 0.0, tag="strand")
        if not self._stops_at(v, node, not v.path) and v.path[0] in self.costs.failed:
            return Constraint(0.0, 0.0, tag=f"seg:{v.path[0]}")
        return Constraint(0.0, 0.0, tag=f"gate:{node}")

    def _cross(self, v: Vehicle, node: int) -> None:
        lst = self.on_seg[v.seg]
        if lst[0] is not v:
            raise self.breach(f"vehicle {v.vid} overtook vehicle {lst[0].vid} on segment {v.seg}")
        self._occupancy(v.seg)
        lst.pop(0)
        if lst and lst[0].waiting is not None and lst[0].waiting[0] == "gate":
            self.wake(lst[0])  # its gate request no longer queues behind v
        self.emit(K.ARRIVAL_AT_NODE, vehicle=v.vid, node=node, segment=v.seg)
        for n in self.exit_watch.get(v.seg, ()):
            self.dirty_exits.add(n)
        if node in self.join_order:
            order = self.join_order[node]
            order.remove(v.vid)
            v.grants.discard(node)
            self.dirty_gates.add(node)
        if self._stops_at(v, node, not v.path):
            self._leave_track(v, node)
            return
        nxt = v.path.pop(0)
        v.seg = nxt
        v.x = v.target = 0.0
        v.plan = _held_plan(self.now, 0.0, v.v)
        self._occupancy(nxt)
        self.on_seg[nxt].append(v)
        if v.loaded:
            v.trip_segs.append(nxt)
        for n in self.exit_watch.get(nxt, ()):
            self.dirty_exits.add(n)

    def _occupancy(self, sid: int) -> None:
        """Fold the occupancy held since the last change into the smoothed value."""
        if not self.costs.w_cong:
            return
        dt = (self.now - self.occ_t[sid]) / US
        self.occ_t[sid] = self.now
        if dt <= 0:
            return
        level = len(self.on_seg[sid]) / self.g.segments[sid].sector_count
        alpha = 1.0 - math.exp(-dt / self.sc.congestion_horizon)
        self.occ_ema[sid] += alpha * (level - self.occ_ema[sid])
        self.costs.occupancy[sid] = self.occ_ema[sid]
        self.costs.touch()

    # -- merges -----------------------------------------------------------------

    def _heads_to(self, u: Vehicle, node: int) -> bool:
        """Is node the end of u's segment or of the one after it?"""
        if self.g.segments[u.seg].dst == node:
            return True
        return bool(u.path) and self.g.segments[u.path[0]].dst == node

    def _branch(self, u: Vehicle, j: int) -> int:
        """The segment on which u will enter join j."""
        return u.seg if self.g.segments[u.seg].dst == j else u.path[0]

    def _rel(self, u: Vehicle, j: int, x: float) -> float:
        """Offset x on u's segment measured from node j (negative before it)."""
        rel = x - self.g.segments[u.seg].length
        if self.g.segments[u.seg].dst != j:
            rel -= self.g.segments[u.path[0]].length
        return rel

    def _fifo_ok(self, v: Vehicle, node: int) -> bool:
        """Gates are requested in segment order: the vehicle in front goes first."""
        pred = self._leader_on_seg(v)
        join = self.g.kind(node) is NodeKind.JOIN
        if pred is not None and self._heads_to(pred, node):
            if self._stops_at(pred, node, not pred.path):
                return self._admitted(pred, node)
            if join and node not in pred.grants:
                return False
        if join and self.g.segments[v.seg].dst != node:
            return all(node in u.grants for u in self.on_seg[v.path[0]])
        return True

    def _merge_key(self, u: Vehicle, j: int) -> tuple:
        x, speed = self.pos(u)
        seg = self.g.segments[u.seg]
        cap = min(self.spec.v_max, seg.v_limit)
        eta = self.now + to_us(stretch_time(min(speed, cap), cap, -self._rel(u, j, x), cap,
                                            self.spec.a_max, self.b))
        branch = self._branch(u, j)
        if self.sc.merge_rule is MergeRule.FIXED_PRIORITY:
            return (0 if self.sc.priority.get(j) == branch else 1, eta, branch)
        return (eta, branch)

    def _end_stop_rel(self, u: Vehicle) -> float:
        """Committed stop point of u relative to the end node of its segment."""
        v_end = u.plan.profile.v_end if u.plan is not None else 0.0
        return u.target - self.g.segments[u.seg].length + v_end * v_end / (2 * self.b)

    def _end_stop_at(self, u: Vehicle, j: int) -> float:
        return self._end_stop_rel(u) + self._rel(u, j, 0.0) + self.g.segments[u.seg].length

    def _merge_feasible(self, v: Vehicle, j: int, order: list[int], idx: int) -> bool:
        if idx > 0:
            p = self.vehicles[order[idx - 1]]
            px, pv = self.pos(p)
            if self._end_stop_at(v, j) > self._target(self._rel(p, j, px), pv) + SEP_TOL:
                return False
            if not self._spaced(self._rel(p, j, px), self._rel(v, j, self.pos(v)[0])):
                return False
        if idx < len(order):
            u = self.vehicles[order[idx]]
            vx, vv = self.pos(v)
            if self._end_stop_at(u, j) > self._target(self._rel(v, j, vx), vv) + SEP_TOL:
                return False
            if not self._spaced(self._rel(v, j, vx), self._rel(u, j, self.pos(u)[0])):
                return False
        return True

    def _spaced(self, lead_front: float, follow_front: float) -> bool:
        """Bumper gap between two fronts measured on a common axis is wide enough."""
        return lead_front - follow_front - self.spec.length >= self._min_gap - SEP_TOL

    def _request_join(self, v: Vehicle, j: int) -> bool:
        if not self._fifo_ok(v, j):
            self._add_waiter(v, j)
            return False
        order = self.join_order[j]
        mine = self._branch(v, j)
        lo = 0
        for i, u in enumerate(order):
            if self._branch(self.vehicles[u], j) == mine:
                lo = i + 1
        key = self._merge_key(v, j)
        ideal = len(order)
        for i in range(lo, len(order)):
            if self._merge_key(self.vehicles[order[i]], j) > key:
                ideal = i
                break
        for idx in list(range(ideal, len(order) + 1)) + list(range(ideal - 1, lo - 1, -1)):
            if self._merge_feasible(v, j, order, idx):
                order.insert(idx, v.vid)
                v.grants.add(j)
                self._drop_waiter(v, j)
                self.dirty_gates.add(j)
                self.emit(K.MERGE_ARBITRATION, vehicle=v.vid, node=j, segment=v.seg,
                          detail={"position": idx, "queue": len(order)})
                return True
        self._add_waiter(v, j)
        return False

    def _join_pred(self, j: int, vid: int) -> Optional[Vehicle]:
        order = self.join_order[j]
        i = order.index(vid)
        return self.vehicles[order[i - 1]] if i else None

    def _add_waiter(self, v: Vehicle, node: int) -> None:
        if v.vid not in self.gate_waiters[node]:
            self.gate_waiters[node].append(v.vid)

    def _drop_waiter(self, v: Vehicle, node: int) -> None:
        if v.vid in self.gate_waiters[node]:
            self.gate_waiters[node].remove(v.vid)

    def _retry_gate(self, node: int) -> None:
        for vid in list(self.gate_waiters[node]):
            v = self.vehicles[vid]
            if v.where != "track" or not self._heads_to(v, node):
                self._drop_waiter(v, node)
                continue
            if node in self.join_order:
                if node in v.grants:
                    self._drop_waiter(v, node)
                    continue
                ok = self._request_join(v, node)
            else:
                if self._admitted(v, node) or self.g.segments[v.seg].dst != node:
                    self._drop_waiter(v, node)
                    continue
                if not self._fifo_ok(v, node):
                    continue
                ok = self._request_admission(v, node)
            if ok and v.waiting == ("gate", node):
                self.wake(v)

    # -- stations and capacitors ------------------------------------------------

    def _request_admission(self, v: Vehicle, n: int) -> bool:
        if n in self.capacitors:
            adm = self.capacitors[n].admit_vehicle(v.vid)
        else:
            st = self.stations[n]
            adm = st.admit_vehicle(v.vid)
            if adm is None and st.berths_full() and n not in self.evicting:
                self._evict(n)
        if adm is None:
            self._add_waiter(v, n)
            return False
        v.admission = (n, adm)
        self._drop_waiter(v, n)
        return True

    def _evict(self, n: int) -> None:
        st = self.stations[n]
        occupants = [self.idle[u] for u in st.berths if u is not None and u in self.idle]
        victim = evict_for_arrival(occupants)
        if victim is None:
            return
        cap = nearest_capacitor(n, self._view())
        if cap is None:
            return
        self.evicting[n] = victim
        u = self.vehicles[victim]
        self._clear_idle(u)
        self._send(u, cap, "park")

    def _leave_track(self, v: Vehicle, node: int) -> None:
        """The vehicle turned off the main line into a station or capacitor."""
        self._wake_watchers(v)
        adm = v.admission[1]
        v.admission = None
        v.seg = None
        v.plan = None
        v.node = node
        v.stranding = v.stranded = False
        v.strand_node = None
        if node in self.capacitors:
            v.where, v.place = "capacitor", "slot"
            self.capacitors[node].store(v.vid)
            if v.purpose == "park":
                self.park_inbound[node] -= 1
            if self.evicting.get(node) == v.vid:
                del self.evicting[node]
            v.purpose, v.dest = "", None
            self._set_idle(v, node)
            self._dispatch()
            return
        v.where, v.place = "station", "spur"
        v.transit = node != v.dest
        if v.loaded and not v.transit:
            grp = self.groups[v.group]
            stretches = [(self.g.segments[s].length, self.g.segments[s].v_limit) for s in v.trip_segs]
            min_time = min_trip_time(stretches, self.spec, 0.0, self.sc.station_speed)
            grp.t_arrive = self.now
            grp.outcome = Outcome.SERVED
            self.alive.discard(grp.id)
            self.emit(K.TRIP_END, vehicle=v.vid, group=grp.id, node=node,
                      detail={"min_time": min_time, "route_len_um": v.trip_um})
        when = self.now + self.t_shift[node]
        if adm.place == "berth":
            self.schedule(when, K.BERTH_ENTER, vehicle=v.vid, node=node, detail={"berth": adm.index})
        else:
            self.schedule(when, K.BUFFER_ENTER, vehicle=v.vid, node=node, detail={"buffer": "in"})

    def _on_berth_enter(self, e: Event) -> None:
        v = self.vehicles[e.vehicle]
        s = e.node
        self.stations[s].occupy_berth(v.vid, e.detail["berth"])
        v.place = "berth"
        if v.transit:
            self._ready_to_leave(v, s)
        elif v.loaded:
            self.emit(K.ALIGHT_START, vehicle=v.vid, group=v.group, node=s)
            alight = self.group_times[v.group][1]
            self.schedule(self.now + to_us(alight), K.ALIGHT_END, vehicle=v.vid, group=v.group, node=s)
        else:
            self._vehicle_free(v, s)

    def _on_alight_end(self, e: Event) -> None:
        v = self.vehicles[e.vehicle]
        v.group = None
        v.trip_segs = []
        v.trip_um = 0
        self._vehicle_free(v, e.node)

    def _on_buffer_enter(self, e: Event) -> None:
        v = self.vehicles[e.vehicle]
        st = self.stations[e.node]
        if e.detail["buffer"] == "in":
            st.in_reserved -= 1
            st.in_buffer.append(v.vid)
            v.place = "in_buffer"
            self._advance_in_buffer(e.node)
        else:
            st.out_reserved -= 1
            st.out_buffer.append(v.vid)
            v.place = "out_buffer"
            self.exit_q[e.node].append(v)
            self.dirty_exits.add(e.node)

    def _advance_in_buffer(self, s: int) -> None:
        st = self.stations[s]
        while st.in_buffer:
            i = st.choose_berth()
            if i is None:
                return
            vid = st.in_buffer.popleft()
            st.berth_reserved[i] = vid
            self.vehicles[vid].place = "spur"
            self.emit(K.BUFFER_LEAVE, vehicle=vid, node=s)
            self.schedule(self.now + self.t_shift[s], K.BERTH_ENTER, vehicle=vid, node=s,
                          detail={"berth": i})
            self.dirty_gates.add(s)

    def _berth_freed(self, s: int) -> None:
        self._advance_in_buffer(s)
        self.dirty_gates.add(s)
        for vid in list(self.station_blocked[s]):
            self.station_blocked[s].remove(vid)
            self._ready_to_leave(self.vehicles[vid], s)

    def _ready_to_leave(self, v: Vehicle, s: int) -> None:
        """A berth vehicle wants to leave: through the output buffer or straight out."""
        st = self.stations[s]
        i = st.berth_of(v.vid)
        if st.departure_blocked(i):
            for j in range(i):
                u = st.berths[j]
                if u is not None and u in self.idle:
                    cap = nearest_capacitor(s, self._view())
                    if cap is not None:
                        self._clear_idle(self.vehicles[u])
                        self._send(self.vehicles[u], cap, "park")
            if st.departure_blocked(i):
                if v.vid not in self.station_blocked[s]:
                    self.station_blocked[s].append(v.vid)
                return
        if st.spec.out_buffer == 0:
            if v not in self.exit_q[s]:
                self.exit_q[s].append(v)
            self.dirty_exits.add(s)
            return
        if not st.out_buffer_free():
            if v.vid not in self.station_blocked[s]:
                self.station_blocked[s].append(v.vid)
            return
        st.out_reserved += 1
        st.release_berth(v.vid)
        v.place = "spur"
        self.emit(K.BERTH_LEAVE, vehicle=v.vid, node=s)
        if self.evicting.get(s) == v.vid:
            del self.evicting[s]
        self.schedule(self.now + self.t_shift[s], K.BUFFER_ENTER, vehicle=v.vid, node=s,
                      detail={"buffer": "out"})
        self._berth_freed(s)

    # -- exits ----------------------------------------------------------------

    def _exit_watch_map(self) -> dict[int, list[int]]:
        """Segments whose traffic can change whether a vehicle may leave a node."""
        watch: dict[int, list[int]] = {}
        for n in list(self.stations) + list(self.capacitors):
            segs = {self.g.out_seg(n)}
            todo = [(n, 0.0)]
            while todo:
                m, d = todo.pop()
                for sid in self.g.in_segs[m]:
                    if sid in segs:
                        continue
                    segs.add(sid)
                    nd = d + self.g.segments[sid].length
                    if nd < self.lam:
                        todo.append((self.g.segments[sid].src, nd))
            for sid in sorted(segs):
                watch.setdefault(sid, []).append(n)
        self._upstream = {}
        for sid, nodes in watch.items():
            for n in nodes:
                self._upstream.setdefault(n, []).append(sid)
        return watch

    def _route(self, v: Vehicle, n: int) -> bool:
        """Fresh route from n for a vehicle about to leave; may retarget after failures."""
        found = self.router.path(n, v.dest)
        if found is None:
            cands = self.g.capacitor_ids() if v.dest in self.capacitors else self.g.station_ids()
            cands = [c for c in cands if c != n]
            new = nearest_reachable_target(self.g, self.costs, n, v.dest, cands)
            if new is None:
                return False
            self._retarget(v, new)
            found = self.router.path(n, new)
        v.path = list(found[1])
        return bool(v.path)

    def _exit_clear(self, v: Vehicle, n: int) -> bool:
        out = v.path[0]
        lst = self.on_seg[out]
        cons = self._scan(v, out, 0.0, v.path[1:], lst[-1] if lst else None, probe=True)
        if any(c.source is not None and c.d < -SEP_TOL for c in cons):
            return False
        ahead = self._first_ahead(out, 0.0, v.path[1:])
        if ahead is not None and not self._spaced(ahead, 0.0):
            return False
        st = self.stations.get(n)
        if st is not None and st.in_line:
            return True  # through traffic enters the station itself
        limit = -self.spec.length - (self.spec.s_static if self.rule is KeepingRule.OPTIMAL else 0.0)
        for sid in self._upstream.get(n, ()):
            if sid == out:
                continue
            for u in self.on_seg[sid]:
                if out not in u.path:
                    continue
                j = u.path.index(out)
                r = sum(self.g.segments[p].length for p in u.path[:j])
                if self._end_stop_rel(u) - r > limit + SEP_TOL:
                    return False
        return True

    def _first_ahead(self, seg: int, x: float, path: Sequence[int]) -> Optional[float]:
        """Front distance of the nearest vehicle ahead of offset x along seg then path."""
        here = [self.pos(u)[0] for u in self.on_seg[seg]]
        here = [p for p in here if p > x - SEP_TOL]
        if here:
            return min(here) - x
        acc = self.g.segments[seg].length - x
        for sid in path:
            if acc > self.spec.length + self._min_gap:
                return None
            if self.on_seg[sid]:
                return acc + self.pos(self.on_seg[sid][-1])[0]
            acc += self.g.segments[sid].length
        return None

    def _try_exits(self, n: int) -> None:
        q = self.exit_q[n]
        while q:
            v = q[0]
            if not v.transit and not self._route(v, n):
                return
            if not self._exit_clear(v, n):
                return
            q.popleft()
            self._insert(v, n)

    def _insert(self, v: Vehicle, n: int) -> None:
        if v.place == "berth":
            self.stations[n].release_berth(v.vid)
            self.emit(K.BERTH_LEAVE, vehicle=v.vid, node=n)
            if self.evicting.get(n) == v.vid:
                del self.evicting[n]
            self._berth_freed(n)
        elif v.place == "out_buffer":
            st = self.stations[n]
            st.out_buffer.remove(v.vid)
            self.emit(K.BUFFER_LEAVE, vehicle=v.vid, node=n)
            for vid in list(self.station_blocked[n]):
                self.station_blocked[n].remove(vid)
                self._ready_to_leave(self.vehicles[vid], n)
        else:
            self.capacitors[n].release(v.vid)
            self.dirty_gates.add(n)
        seg = v.path.pop(0)
        v.where, v.node, v.place = "track", None, None
        v.seg, v.x, v.v = seg, 0.0, 0.0
        v.plan = _rest_plan(self.now, 0.0)
        v.target = 0.0
        v.forks_done = set()
        self._occupancy(seg)
        self.on_seg[seg].append(v)
        if v.transit:
            v.transit = False
            if v.loaded:
                v.trip_segs.append(seg)
        elif v.loaded:
            v.trip_segs, v.trip_um = [seg], 0
            self.groups[v.group].t_depart = self.now
            self.emit(K.TRIP_START, vehicle=v.vid, group=v.group, node=n,
                      detail={"destination": v.dest})
        else:
            self.emit(K.EMPTY_TRIP_START, vehicle=v.vid, node=n,
                      detail={"destination": v.dest, "purpose": v.purpose})
        for m in self.exit_watch.get(seg, ()):
            self.dirty_exits.add(m)
        self._plan(v)

    # -- fleet ------------------------------------------------------------------

    def _set_idle(self, v: Vehicle, node: int) -> None:
        v.idle_since = self.now
        self.idle[v.vid] = IdleVehicle(v.vid, node, self.now)
        if node in self.stations:
            self.emit(K.IDLE_START, vehicle=v.vid, node=node)

    def _clear_idle(self, v: Vehicle) -> None:
        iv = self.idle.pop(v.vid)
        v.idle_since = None
        if iv.node in self.stations:
            self.emit(K.IDLE_END, vehicle=v.vid, node=iv.node)

    def _vehicle_free(self, v: Vehicle, s: int) -> None:
        st = self.stations[s]
        assigned_here = v.assigned == s
        if assigned_here:
            st.n_assigned -= 1
        v.assigned, v.purpose, v.dest = None, "", None
        if assigned_here and st.queue:
            self._board(v, s)
            return
        self._set_idle(v, s)
        self._dispatch()
        if v.vid in self.idle:
            self._release(v, s)

    def _dispatch(self) -> None:
        """Serve the oldest unserved calls with the nearest idle vehicles."""
        while self.idle:
            calls = []
            for s, st in self.stations.items():
                k = max(st.n_assigned, 0)
                if len(st.queue) > k:
                    gid = st.queue[k]
                    calls.append((self.groups[gid].t_appear, gid, s))
            if not calls:
                return
            idle = sorted(self.idle.values(), key=lambda iv: iv.vid)
            for _, _, s in sorted(calls):
                vid = allocate_vehicle(s, idle, self.router.distance)
                if vid is not None:
                    self._assign(self.vehicles[vid], s)
                    break
            else:
                return

    def _assign(self, v: Vehicle, s: int) -> None:
        self._clear_idle(v)
        self.emit(K.VEHICLE_SEIZED, vehicle=v.vid, node=s)
        if v.where == "station" and v.node == s:
            self._board(v, s)
            return
        self.stations[s].n_assigned += 1
        v.assigned = s
        self._send(v, s, "pickup")

    def _board(self, v: Vehicle, s: int) -> None:
        st = self.stations[s]
        gid = st.seize_head()
        grp = self.groups[gid]
        grp.t_board_start = self.now
        grp.vehicle = v.vid
        self.emit(K.QUEUE_LEAVE, group=gid, node=s)
        self.emit(K.BOARD_START, vehicle=v.vid, group=gid, node=s)
        board = self.group_times[gid][0]
        self.schedule(self.now + to_us(board), K.BOARD_END, vehicle=v.vid, group=gid, node=s)

    def _on_board_end(self, e: Event) -> None:
        v = self.vehicles[e.vehicle]
        grp = self.groups[e.group]
        v.group = grp.id
        v.dest = grp.destination
        v.purpose = "trip"
        self._ready_to_leave(v, e.node)

    def _send(self, v: Vehicle, target: int, purpose: str) -> None:
        """Start an empty trip from wherever the idle vehicle stands."""
        v.dest, v.purpose = target, purpose
        if target in self.capacitors:
            self.park_inbound[target] += 1
        if v.where == "capacitor":
            self.exit_q[v.node].append(v)
            self.dirty_exits.add(v.node)
        else:
            self._ready_to_leave(v, v.node)

    def _release(self, v: Vehicle, s: int) -> None:
        action = on_vehicle_released(v.vid, s, self.sc.policy, self._view(exclude=v.vid))
        if isinstance(action, EmptyTripTo):
            self._clear_idle(v)
            self._send(v, action.node, "park" if action.node in self.capacitors else "rebalance")

    def _view(self, exclude: Optional[int] = None) -> "_FleetView":
        return _FleetView(self, exclude)

    # -- failures ---------------------------------------------------------------

    def _on_link_fail(self, e: Event) -> None:
        sid = e.segment
        self.costs.fail(sid)
        on_track = [v for v in self.vehicles if v.where == "track"]
        to_caps = [v for v in on_track if v.dest in self.capacitors]
        to_stations = [v for v in on_track if v.dest not in self.capacitors]
        actions: list[FailureAction] = []
        for group, cands in ((to_stations, self.g.station_ids()), (to_caps, self.g.capacitor_ids())):
            states = [VehicleRouteState(v.vid, self.g.segments[v.seg].dst, v.dest, tuple(v.path), v.seg)
                      for v in group]
            actions += handle_link_failure(self.g, self.costs, sid, states, cands)
        for act in sorted(actions, key=lambda a: a.vid):
            v = self.vehicles[act.vid]
            if act.kind == "stranded":
                if act.strand_node is None:
                    v.stranding = True
                else:
                    v.strand_node = act.strand_node
                self.emit(K.STRANDED, vehicle=v.vid, node=act.strand_node, segment=v.seg)
            elif act.kind == "retargeted":
                self._retarget(v, act.destination)
                v.path = list(act.path)
            else:
                v.path = list(act.path)
            if v.admission is not None and not self._stops_at(v, v.admission[0], not v.path):
                self._cancel_admission(v)
        self.failure_log.append((self.now, sid, actions))
        self._wake_all()

    def _retarget(self, v: Vehicle, new: int) -> None:
        if v.assigned is not None:
            self.stations[v.assigned].n_assigned -= 1
            v.assigned = None
            v.purpose = "rebalance"
        if v.purpose == "park" and v.dest in self.park_inbound:
            self.park_inbound[v.dest] -= 1
            if new in self.park_inbound:
                self.park_inbound[new] += 1
        if v.group is not None:
            self.groups[v.group].destination = new
        v.dest = new
        if v.admission is not None and v.admission[0] != new:
            self._cancel_admission(v)

    def _cancel_admission(self, v: Vehicle) -> None:
        n, adm = v.admission
        v.admission = None
        if n in self.capacitors:
            self.capacitors[n].cancel_admission(v.vid, adm)
        else:
            self.stations[n].cancel_admission(v.vid, adm)
        self.dirty_gates.add(n)

    def _on_link_restore(self, e: Event) -> None:
        self.costs.restore(e.segment)
        for v in self.vehicles:
            if v.where != "track":
                continue
            v.stranding = False
            v.stranded = False
            v.strand_node = None
            if v.waiting is not None and v.waiting[0] == "strand":
                v.waiting = ("freed", -1)
            found = self.router.path(self.g.segments[v.seg].dst, v.dest)
            if found is not None and list(found[1]) != v.path and v.seg not in self.costs.failed:
                v.path = list(found[1])
                if v.admission is not None and not self._stops_at(v, v.admission[0], not v.path):
                    self._cancel_admission(v)
        self._wake_all()
        for n in self.exit_q:
            self.dirty_exits.add(n)

    # -- separation -------------------------------------------------------------

    def _physical_leader(self, v: Vehicle) -> Optional[tuple[Vehicle, float]]:
        """Nearest vehicle ahead along v's route and its front distance from v's segment start."""
        lst = self.on_seg[v.seg]
        i = lst.index(v)
        if i:
            return lst[i - 1], self.pos(lst[i - 1])[0]
        acc = self.g.segments[v.seg].length
        x = self.pos(v)[0]
        for k, sid in enumerate(v.path):
            if acc - x > self.lam or self._stops_at(v, self.g.segments[sid].src, False):
                return None
            if self.on_seg[sid]:
                r = self.on_seg[sid][-1]
                return r, acc + self.pos(r)[0]
            acc += self.g.segments[sid].length
        return None

    def _stop_gap(self, v: Vehicle, end_of_plan: bool) -> Optional[float]:
        """Leader's allowed stop point minus v's stop point; negative means a breach."""
        found = self._physical_leader(v)
        if found is None:
            return None
        leader, d = found
        lv = self.pos(leader)[1]
        if self.rule is KeepingRule.OPTIMAL:
            allowed = d + lv * lv / (2 * self.b) - self.spec.length - self.spec.s_static
        else:
            allowed = d - self.spec.length
        x, sp = self.pos(v)
        if end_of_plan:
            ve = v.plan.profile.v_end
            mine = v.target + ve * ve / (2 * self.b)
        else:
            mine = x + sp * sp / (2 * self.b)
        bumper = d - x - self.spec.length - self._min_gap
        return min(allowed - mine, bumper)

    def _check_plan(self, v: Vehicle, leader: Optional[Vehicle]) -> None:
        if v.plan.emergency:
            return
        gap = self._stop_gap(v, end_of_plan=True)
        self.diag.separation_checks += 1
        if gap is not None and gap < -SEP_TOL:
            self._violation(f"vehicle {v.vid} plans {-gap:.6f} m past its allowed stop point")

    def _violation(self, msg: str) -> None:
        self.diag.separation_violations += 1
        if self.diag.first_violation is None:
            self.diag.first_violation = f"t={self.now} us: {msg}"
        if self.cfg.debug:
            raise self.breach(msg)

    def separation_audit(self) -> list[str]:
        """Every track vehicle whose current stop point is past what its leader allows."""
        out = []
        for v in self.vehicles:
            if v.where != "track":
                continue
            gap = self._stop_gap(v, end_of_plan=False)
            if gap is not None and gap < -SEP_TOL:
                out.append(f"vehicle {v.vid} on segment {v.seg}: {-gap:.6f} m")
        return out


class _FleetView:
    def __init__(self, sim: Simulation, exclude: Optional[int]):
        self.sim = sim
        self.exclude = exclude

    def distance(self, a: int, b: int) -> float:
        return self.sim.router.distance(a, b)

    def idle_at(self, station: int) -> int:
        return sum(1 for iv in self.sim.idle.values() if iv.node == station and iv.vid != self.exclude)

    def queue_len(self, station: int) -> int:
        return len(self.sim.stations[station].queue)

    def inbound(self, station: int) -> int:
        heading = sum(1 for v in self.sim.vehicles if v.dest == station and v.purpose == "rebalance")
        return self.sim.stations[station].n_assigned + heading

    def stations(self) -> list[int]:
        return sorted(self.sim.stations)

    def capacitors_with_room(self) -> list[int]:
        return [c for c, cap in sorted(self.sim.capacitors.items())
                if cap.free_slots() - self.sim.park_inbound[c] > 0]


def run_replication(sc: Scenario, cfg: Optional[ReplicationConfig] = None,
                    on_event: Optional[Callable[[Simulation, Event], None]] = None) -> RunOutput:
    """Run one replication of a validated scenario."""
    return Simulation(sc, cfg, on_event).run()

"""Vehicle allocation and empty-vehicle policies.

Decisions are pure functions of a read-only view, so they can be exercised
without a running simulation and swapped for other strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Protocol, Sequence


class AllocationRule(str, Enum):
    NEAREST_IDLE = "NearestIdle"


class EmptyRule(str, Enum):
    STAY_AT_STATION = "StayAtStation"
    RETURN_TO_CAPACITOR = "ReturnToCapacitor"
    THRESHOLD_REBALANCE = "ThresholdRebalance"


@dataclass(frozen=True)
class FleetPolicy:
    allocation: AllocationRule = AllocationRule.NEAREST_IDLE
    empty_rule: EmptyRule = EmptyRule.STAY_AT_STATION
    stay_cap: int = 1
    rebalance_threshold: int = 2

    def problems(self) -> list[str]:
        out = []
        if self.stay_cap < 0:
            out.append("fleet: stay_cap must be >= 0")
        if self.rebalance_threshold < 0:
            out.append("fleet: rebalance_threshold must be >= 0")
        return out


@dataclass(frozen=True)
class IdleVehicle:
    vid: int
    node: int  # station or capacitor where it stands
    idle_since: int = 0


@dataclass(frozen=True)
class Stay:
    pass


@dataclass(frozen=True)
class EmptyTripTo:
    node: int


Action = Stay | EmptyTripTo


class FleetView(Protocol):
    """What the empty-vehicle rules may look at."""

    def distance(self, a: int, b: int) -> float: ...
    def idle_at(self, station: int) -> int: ...
    def queue_len(self, station: int) -> int: ...
    def inbound(self, station: int) -> int: ...
    def stations(self) -> Sequence[int]: ...
    def capacitors_with_room(self) -> Sequence[int]: ...


def allocate_vehicle(station: int, idle: Sequence[IdleVehicle],
                     distance: Callable[[int, int], float]) -> Optional[int]:
    """Idle vehicle nearest (network distance) to the calling station; ties -> lower id."""
    best = None
    for iv in idle:
        d = distance(iv.node, station)
        if d == math.inf:
            continue
        key = (d, iv.vid)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def nearest_capacitor(node: int, view: FleetView) -> Optional[int]:
    best = None
    for c in view.capacitors_with_room():
        d = view.distance(node, c)
        if d == math.inf:
            continue
        if best is None or (d, c) < best:
            best = (d, c)
    return None if best is None else best[1]


def _stay_or_park(station: int, policy: FleetPolicy, view: FleetView) -> Action:
    if view.idle_at(station) < policy.stay_cap:
        return Stay()
    cap = nearest_capacitor(station, view)
    return Stay() if cap is None else EmptyTripTo(cap)


def on_vehicle_released(vid: int, station: int, policy: FleetPolicy, view: FleetView) -> Action:
    """Where a just-freed empty vehicle goes when no call claimed it.

    `view.idle_at(station)` counts the other idle vehicles already standing
    there, not this one.
    """
    rule = policy.empty_rule
    if rule is EmptyRule.RETURN_TO_CAPACITOR:
        cap = nearest_capacitor(station, view)
        return Stay() if cap is None else EmptyTripTo(cap)
    if rule is EmptyRule.THRESHOLD_REBALANCE:
        best = None
        for s in view.stations():
            if s == station:
                continue
            deficit = view.queue_len(s) - view.inbound(s)
            if deficit > policy.rebalance_threshold and view.distance(station, s) < math.inf:
                if best is None or (-deficit, s) < best:
                    best = (-deficit, s)
        if best is not None:
            return EmptyTripTo(best[1])
    return _stay_or_park(station, policy, view)


def evict_for_arrival(occupants: Sequence[IdleVehicle]) -> Optional[int]:
    """Longest-idle empty berth occupant to send away; ties -> lower id."""
    if not occupants:
        return None
    return min(occupants, key=lambda iv: (iv.idle_since, iv.vid)).vid

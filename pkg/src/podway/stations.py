"""Stations and capacitors: passenger queues, berths, buffers.

The geometry inside a station is logical. A station owns a FIFO passenger
queue, a row of berths and two vehicle buffers; vehicles move between these
slots in fixed traverse times chosen by the simulator. Nothing here schedules
events; the methods return decisions that the simulation turns into events.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Optional


class StationLayout(str, Enum):
    IN_LINE = "InLine"
    STUB_BERTHS = "StubBerths"


@dataclass(frozen=True)
class StationSpec:
    node: int
    layout: StationLayout = StationLayout.STUB_BERTHS
    berths: int = 3
    in_buffer: int = 2
    out_buffer: int = 1
    spur_len_m: float = 20.0

    def problems(self) -> list[str]:
        out = []
        if self.berths < 1:
            out.append(f"station {self.node}: berths must be >= 1")
        if self.in_buffer < 0 or self.out_buffer < 0:
            out.append(f"station {self.node}: buffer sizes must be >= 0")
        if not self.spur_len_m > 0:
            out.append(f"station {self.node}: spur_len_m must be > 0")
        return out


@dataclass(frozen=True)
class CapacitorSpec:
    node: int
    capacity: int = 50
    initial_vehicles: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.capacity < 1:
            out.append(f"capacitor {self.node}: capacity must be >= 1")
        if self.initial_vehicles < 0:
            out.append(f"capacitor {self.node}: initial_vehicles must be >= 0")
        if self.initial_vehicles > self.capacity:
            out.append(f"capacitor {self.node}: initial_vehicles exceeds capacity")
        return out


@dataclass(frozen=True)
class Admission:
    """Where an approaching vehicle has been told to go."""

    place: str  # "berth", "in_buffer" or "slot"
    index: int = -1


@dataclass
class StationState:
    """Mutable occupancy of one station.

    Berth 0 is the most downstream berth. For in-line stations this matters:
    an entering vehicle rolls forward through free berths and stops at the
    lowest-index berth it can reach, and a berth vehicle can only leave once
    every berth in front of it is clear.
    """

    spec: StationSpec
    queue: Deque[int] = field(default_factory=deque)
    berths: list[Optional[int]] = field(default_factory=list)
    berth_reserved: list[Optional[int]] = field(default_factory=list)
    in_buffer: Deque[int] = field(default_factory=deque)
    in_reserved: int = 0
    out_buffer: Deque[int] = field(default_factory=deque)
    out_reserved: int = 0
    ready: Deque[int] = field(default_factory=deque)
    waiting: Deque[int] = field(default_factory=deque)
    n_assigned: int = 0

    def __post_init__(self) -> None:
        if not self.berths:
            self.berths = [None] * self.spec.berths
            self.berth_reserved = [None] * self.spec.berths

    @property
    def node(self) -> int:
        return self.spec.node

    @property
    def in_line(self) -> bool:
        return self.spec.layout is StationLayout.IN_LINE

    # -- passengers -------------------------------------------------------

    def enqueue_group(self, group_id: int) -> None:
        self.queue.append(group_id)

    def seize_head(self) -> int:
        """Remove and return the group at the head of the queue."""
        return self.queue.popleft()

    def remove_group(self, group_id: int) -> int:
        """Remove a waiting group (renege); returns its former queue index."""
        idx = self.queue.index(group_id)
        del self.queue[idx]
        return idx

    # -- berths -----------------------------------------------------------

    def _taken(self, i: int) -> bool:
        return self.berths[i] is not None or self.berth_reserved[i] is not None

    def choose_berth(self) -> Optional[int]:
        n = len(self.berths)
        if self.in_line:
            # roll in from the upstream end, stop in front of the first taken berth
            reachable = None
            for i in range(n - 1, -1, -1):
                if self._taken(i):
                    break
                reachable = i
            return reachable
        for i in range(n):
            if not self._taken(i):
                return i
        return None

    def berths_full(self) -> bool:
        return all(self._taken(i) for i in range(len(self.berths)))

    def in_buffer_free(self) -> bool:
        return len(self.in_buffer) + self.in_reserved < self.spec.in_buffer

    def admit_vehicle(self, vid: int) -> Optional[Admission]:
        """Reserve a berth, else an input-buffer slot, else refuse."""
        i = self.choose_berth()
        if i is not None and not self.in_buffer:
            self.berth_reserved[i] = vid
            return Admission("berth", i)
        if self.in_buffer_free():
            self.in_reserved += 1
            return Admission("in_buffer")
        return None

    def cancel_admission(self, vid: int, adm: Admission) -> None:
        if adm.place == "berth":
            assert self.berth_reserved[adm.index] == vid
            self.berth_reserved[adm.index] = None
        else:
            self.in_reserved -= 1

    def occupy_berth(self, vid: int, i: int) -> None:
        assert self.berth_reserved[i] == vid and self.berths[i] is None
        self.berth_reserved[i] = None
        self.berths[i] = vid

    def berth_of(self, vid: int) -> int:
        return self.berths.index(vid)

    def release_berth(self, vid: int) -> int:
        i = self.berths.index(vid)
        self.berths[i] = None
        return i

    def departure_blocked(self, i: int) -> bool:
        """In-line berths cannot be left through an occupied berth in front."""
        if not self.in_line:
            return False
        return any(self._taken(j) for j in range(i))

    def out_buffer_free(self) -> bool:
        return len(self.out_buffer) + self.out_reserved < self.spec.out_buffer

    def check(self) -> None:
        assert len(self.in_buffer) + self.in_reserved <= self.spec.in_buffer
        assert len(self.out_buffer) + self.out_reserved <= self.spec.out_buffer
        assert self.in_reserved >= 0 and self.out_reserved >= 0
        for occ, res in zip(self.berths, self.berth_reserved):
            assert occ is None or res is None


@dataclass
class CapacitorState:
    spec: CapacitorSpec
    stored: list[int] = field(default_factory=list)
    reserved: int = 0
    ready: Deque[int] = field(default_factory=deque)
    waiting: Deque[int] = field(default_factory=deque)

    @property
    def node(self) -> int:
        return self.spec.node

    def free_slots(self) -> int:
        return self.spec.capacity - len(self.stored) - self.reserved

    def admit_vehicle(self, vid: int) -> Optional[Admission]:
        if self.free_slots() > 0:
            self.reserved += 1
            return Admission("slot")
        return None

    def cancel_admission(self, vid: int, adm: Admission) -> None:
        self.reserved -= 1

    def store(self, vid: int, reserved: bool = True) -> None:
        if reserved:
            self.reserved -= 1
        self.stored.append(vid)
        assert len(self.stored) + self.reserved <= self.spec.capacity

    def release(self, vid: int) -> None:
        self.stored.remove(vid)

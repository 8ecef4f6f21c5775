"""Event buffer, simulated clock and replication settings."""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

US = 1_000_000  # microseconds per second


class EventKind(str, Enum):
    # management level
    GROUP_APPEARS = "GroupAppears"
    VEHICLE_SEIZED = "VehicleSeized"
    TRIP_START = "TripStart"
    TRIP_END = "TripEnd"
    EMPTY_TRIP_START = "EmptyTripStart"
    # coordination level
    QUEUE_JOIN = "QueueJoin"
    QUEUE_LEAVE = "QueueLeave"
    BOARD_START = "BoardStart"
    BOARD_END = "BoardEnd"
    ALIGHT_START = "AlightStart"
    ALIGHT_END = "AlightEnd"
    BERTH_ENTER = "BerthEnter"
    BERTH_LEAVE = "BerthLeave"
    BUFFER_ENTER = "BufferEnter"
    BUFFER_LEAVE = "BufferLeave"
    SECTOR_BOUNDARY = "SectorBoundary"
    MERGE_ARBITRATION = "MergeArbitration"
    ARRIVAL_AT_NODE = "ArrivalAtNode"
    RENEGE = "Renege"
    NEXT_ARRIVAL_DUE = "NextArrivalDue"
    WINDOW_CHANGE = "WindowChange"
    LINK_FAIL = "LinkFail"
    LINK_RESTORE = "LinkRestore"
    SIM_END = "SimEnd"
    # a planned stop short of the next boundary, and a wake-up after one
    HALT = "Halt"
    RESUME = "Resume"
    # a vehicle starts or stops standing idle at a station
    IDLE_START = "IdleStart"
    IDLE_END = "IdleEnd"
    # diagnostics
    EMERGENCY_BRAKE = "EmergencyBrake"
    STRANDED = "Stranded"


ALL_KINDS = frozenset(k.value for k in EventKind)


class Event:
    __slots__ = ("t", "seq", "kind", "vehicle", "group", "node", "segment", "token", "detail")

    def __init__(self, t: int, kind: EventKind, vehicle: Optional[int] = None,
                 group: Optional[int] = None, node: Optional[int] = None,
                 segment: Optional[int] = None, token: int = 0,
                 detail: Optional[dict[str, Any]] = None):
        self.t = t
        self.seq = -1
        self.kind = kind
        self.vehicle = vehicle
        self.group = group
        self.node = node
        self.segment = segment
        self.token = token
        self.detail = detail

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"t_us": self.t, "seq": self.seq, "kind": self.kind.value}
        for name in ("vehicle", "group", "node", "segment"):
            val = getattr(self, name)
            if val is not None:
                rec[name] = val
        if self.detail:
            rec["detail"] = self.detail
        return rec

    def __repr__(self) -> str:
        return f"Event({self.to_record()})"


class InvariantBreach(RuntimeError):
    """A broken simulation invariant; carries the event being processed."""

    def __init__(self, message: str, event: Optional[Event] = None):
        where = f" while handling {event!r}" if event is not None else ""
        super().__init__(message + where)
        self.event = event


class EventBuffer:
    """Pending events ordered by (t, seq); seq is the insertion counter."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def next_seq(self) -> int:
        s = self._seq
        self._seq += 1
        return s

    def schedule(self, e: Event) -> Event:
        if e.t < self.now:
            raise InvariantBreach(f"event scheduled at {e.t} us before clock {self.now} us", e)
        e.seq = self.next_seq()
        heapq.heappush(self._heap, (e.t, e.seq, e))
        return e

    def pop(self) -> Event:
        t, _, e = heapq.heappop(self._heap)
        self.now = t
        return e

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None


def to_us(seconds: float) -> int:
    """Round a duration up to the next whole microsecond."""
    return int(math.ceil(seconds * US - 1e-6))


def to_s(us: int) -> float:
    return us / US


@dataclass(frozen=True)
class ReplicationConfig:
    horizon: float = 7200.0
    warmup: float = 0.0
    seed: int = 1
    trace: bool = False
    debug: bool = False  # run the separation check after every event

    def problems(self) -> list[str]:
        if not (0 <= self.warmup < self.horizon):
            return [f"run: need 0 <= warmup < horizon, got warmup={self.warmup}, horizon={self.horizon}"]
        return []

    @property
    def horizon_us(self) -> int:
        return int(round(self.horizon * US))

    @property
    def warmup_us(self) -> int:
        return int(round(self.warmup * US))


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from any JSON-like parts (sha256 of their repr)."""
    h = hashlib.sha256(repr(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1

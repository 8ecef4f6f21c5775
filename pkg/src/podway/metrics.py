"""Run statistics built only from the emitted event records.

Everything reported comes from the record stream, so feeding a saved trace
(with every kind registered) back through `MetricsAccumulator` reproduces a
run's Metrics. Times are integer microseconds and distances integer
micrometres until the final division.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from .kernel import US
from .motion import min_trip_time  # noqa: F401  (re-exported for report code)

UM = 1_000_000  # micrometres per metre
SATURATION_GROWTH = 1.0  # groups, q4 - q1 of the quarter-averaged total queue


def p95(values: Sequence[float]) -> Optional[float]:
    """Nearest-rank 95th percentile; None for an empty sample."""
    if not values:
        return None
    s = sorted(values)
    return s[max(math.ceil(0.95 * len(s)) - 1, 0)]


def mean(values: Sequence[float]) -> Optional[float]:
    """Correctly rounded sum over n, so the result does not depend on order."""
    return math.fsum(values) / len(values) if values else None


class StepIntegral:
    """Integral of a piecewise-constant count over [start, end], optionally binned."""

    def __init__(self, start: int, end: int, bin_us: Optional[int] = None, value: int = 0):
        self.start, self.end = start, end
        self.value = value
        self.t = 0
        self.area = 0
        self.peak: Optional[int] = None
        self.bin_us = bin_us
        self.bins: list[int] = []
        if bin_us:
            self.bins = [0] * max(1, math.ceil((end - start) / bin_us))

    def _accrue(self, t0: int, t1: int) -> None:
        a, b = max(t0, self.start), min(t1, self.end)
        if b <= a or self.value == 0:
            return
        self.area += self.value * (b - a)
        if self.bin_us:
            k = (a - self.start) // self.bin_us
            while a < b:
                edge = min(self.start + (k + 1) * self.bin_us, b)
                self.bins[k] += self.value * (edge - a)
                a, k = edge, k + 1

    def step(self, t: int, delta: int) -> None:
        self._accrue(self.t, t)
        if self.peak is None and t > self.start:
            self.peak = self.value  # the level held at the window start
        self.t = max(self.t, t)
        self.value += delta
        if self.start <= t <= self.end:
            self.peak = self.value if self.peak is None else max(self.peak, self.value)

    def close(self) -> None:
        self._accrue(self.t, self.end)
        if self.peak is None:
            self.peak = self.value
        self.t = max(self.t, self.end)

    def mean(self) -> float:
        return self.area / (self.end - self.start)


@dataclass
class StationStats:
    queue_mean: float
    queue_max: int
    wait_mean: Optional[float]
    wait_p95: Optional[float]
    idle_mean: float
    groups: int


@dataclass
class TripRecord:
    group: int
    origin: int
    destination: int
    size: int
    t_appear: float
    wait: float
    min_time: float
    actual_time: float
    delay: float
    route_len: float


@dataclass
class Metrics:
    stations: dict[int, StationStats]
    groups_appeared: int
    groups_served: int
    groups_reneged: int
    groups_in_system: int
    cohort_groups: int
    trips_served: int
    wait_mean: Optional[float]
    wait_p95: Optional[float]
    trip_time_mean: Optional[float]
    route_len_mean: Optional[float]
    delay_mean: Optional[float]
    mileage_full: float
    mileage_empty: float
    mileage_full_um: int
    mileage_empty_um: int
    queue_mean_total: float
    queue_quarters: list[float]
    saturated: bool
    probe_vph: Optional[float]
    emergency_brakes: int
    sector_transits: int
    horizon: float
    warmup: float

    def row(self) -> dict[str, Any]:
        """Flat mapping for one summary.csv row."""
        out: dict[str, Any] = {}
        for k, v in asdict(self).items():
            if k == "stations":
                continue
            if k == "queue_quarters":
                for i, q in enumerate(v):
                    out[f"queue_q{i + 1}"] = q
                continue
            out[k] = v
        for sid, st in sorted(self.stations.items()):
            for k, v in asdict(st).items():
                out[f"st{sid}_{k}"] = v
        return out


class MetricsAccumulator:
    """Consumes event records (dicts) in processing order."""

    def __init__(self, stations: Sequence[int], horizon_us: int, warmup_us: int,
                 probe_node: Optional[int] = None):
        self.stations = list(stations)
        self.horizon_us, self.warmup_us = horizon_us, warmup_us
        self.probe_node = probe_node
        quarter = max((horizon_us - warmup_us) // 4, 1)
        self.queue = {s: StepIntegral(warmup_us, horizon_us) for s in self.stations}
        self.idle = {s: StepIntegral(warmup_us, horizon_us) for s in self.stations}
        self.total_queue = StepIntegral(warmup_us, warmup_us + 4 * quarter, bin_us=quarter)
        self.appear: dict[int, tuple[int, int, int, int]] = {}  # gid -> (t, origin, dest, size)
        self.board: dict[int, int] = {}
        self.depart: dict[int, int] = {}
        self.waits: dict[int, list[int]] = {s: [] for s in self.stations}
        self.trips: list[TripRecord] = []
        self.all_trips: list[TripRecord] = []
        self.served = 0
        self.reneged = 0
        self.full_um = 0
        self.empty_um = 0
        self.transits = 0
        self.probe = 0
        self.emergencies = 0
        self.closed = False

    def feed(self, rec: dict[str, Any]) -> None:
        kind = rec["kind"]
        t = rec["t_us"]
        if kind in ("SectorBoundary", "Halt"):
            det = rec["detail"]
            if t >= self.warmup_us:
                if det["loaded"]:
                    self.full_um += det["dist_um"]
                else:
                    self.empty_um += det["dist_um"]
                self.transits += 1
        elif kind == "QueueJoin":
            self.queue[rec["node"]].step(t, 1)
            self.total_queue.step(t, 1)
        elif kind == "QueueLeave":
            self.queue[rec["node"]].step(t, -1)
            self.total_queue.step(t, -1)
        elif kind == "IdleStart":
            self.idle[rec["node"]].step(t, 1)
        elif kind == "IdleEnd":
            self.idle[rec["node"]].step(t, -1)
        elif kind == "GroupAppears":
            det = rec["detail"]
            self.appear[rec["group"]] = (t, rec["node"], det["destination"], det["size"])
        elif kind == "BoardStart":
            g = rec["group"]
            self.board[g] = t
            t0, origin, _, _ = self.appear[g]
            if t0 >= self.warmup_us:
                self.waits[origin].append(t - t0)
        elif kind == "TripStart":
            self.depart[rec["group"]] = t
        elif kind == "TripEnd":
            self._trip_end(rec)
        elif kind == "Renege":
            self.reneged += 1
        elif kind == "ArrivalAtNode":
            if rec["node"] == self.probe_node and self.warmup_us <= t <= self.horizon_us:
                self.probe += 1
        elif kind == "EmergencyBrake":
            self.emergencies += 1

    def _trip_end(self, rec: dict[str, Any]) -> None:
        g = rec["group"]
        t = rec["t_us"]
        det = rec["detail"]
        self.served += 1
        t0, origin, _, size = self.appear[g]
        actual = (t - self.depart[g]) / US
        min_time = det["min_time"]
        trip = TripRecord(
            group=g, origin=origin, destination=rec["node"], size=size,
            t_appear=t0 / US, wait=(self.board[g] - t0) / US, min_time=min_time,
            actual_time=actual, delay=actual - min_time, route_len=det["route_len_um"] / UM,
        )
        self.all_trips.append(trip)
        if t0 >= self.warmup_us:
            self.trips.append(trip)

    def feed_all(self, records: Iterable[dict[str, Any]]) -> "MetricsAccumulator":
        for r in records:
            self.feed(r)
        return self

    def summarize(self, groups_in_system: Optional[int] = None) -> Metrics:
        if not self.closed:
            for s in self.stations:
                self.queue[s].close()
                self.idle[s].close()
            self.total_queue.close()
            self.closed = True
        stations = {}
        for s in self.stations:
            q = self.queue[s]
            w = [x / US for x in self.waits[s]]
            stations[s] = StationStats(
                queue_mean=q.mean(), queue_max=q.peak or 0, wait_mean=mean(w), wait_p95=p95(w),
                idle_mean=self.idle[s].mean(), groups=len(w),
            )
        all_w = [x / US for s in self.stations for x in self.waits[s]]
        quarter_len = self.total_queue.bin_us or 1
        quarters = [b / quarter_len for b in self.total_queue.bins]
        rising = all(a < b for a, b in zip(quarters, quarters[1:]))
        appeared = len(self.appear)
        in_sys = appeared - self.served - self.reneged
        if groups_in_system is not None and groups_in_system != in_sys:
            raise AssertionError(
                f"group conservation broken: {appeared} appeared, {self.served} served,"
                f" {self.reneged} reneged, {groups_in_system} still in the system"
            )
        window_h = (self.horizon_us - self.warmup_us) / US / 3600
        cohort = sum(1 for t0, *_ in self.appear.values() if t0 >= self.warmup_us)
        return Metrics(
            stations=stations,
            groups_appeared=appeared,
            groups_served=self.served,
            groups_reneged=self.reneged,
            groups_in_system=in_sys,
            cohort_groups=cohort,
            trips_served=len(self.trips),
            wait_mean=mean(all_w),
            wait_p95=p95(all_w),
            trip_time_mean=mean([tr.actual_time for tr in self.trips]),
            route_len_mean=mean([tr.route_len for tr in self.trips]),
            delay_mean=mean([tr.delay for tr in self.trips]),
            mileage_full=self.full_um / UM,
            mileage_empty=self.empty_um / UM,
            mileage_full_um=self.full_um,
            mileage_empty_um=self.empty_um,
            queue_mean_total=sum(st.queue_mean for st in stations.values()),
            queue_quarters=quarters,
            saturated=rising and quarters[-1] - quarters[0] > SATURATION_GROWTH,
            probe_vph=None if self.probe_node is None else self.probe / window_h,
            emergency_brakes=self.emergencies,
            sector_transits=self.transits,
            horizon=self.horizon_us / US,
            warmup=self.warmup_us / US,
        )


def apply_warmup(records: Iterable[dict[str, Any]], stations: Sequence[int], horizon: float,
                 warmup: float, probe_node: Optional[int] = None) -> Metrics:
    """Metrics of a record stream with statistics restricted to [warmup, horizon]."""
    acc = MetricsAccumulator(stations, int(round(horizon * US)), int(round(warmup * US)), probe_node)
    return acc.feed_all(records).summarize()


def queue_profile(records: Iterable[dict[str, Any]], horizon_us: int, window_us: int) -> list[float]:
    """Time-averaged total station queue in consecutive windows of [0, horizon]."""
    n = max(horizon_us // window_us, 1)
    acc = StepIntegral(0, n * window_us, bin_us=window_us)
    for r in records:
        if r["kind"] == "QueueJoin":
            acc.step(r["t_us"], 1)
        elif r["kind"] == "QueueLeave":
            acc.step(r["t_us"], -1)
    acc.close()
    return [b / window_us for b in acc.bins]


def steady_band(tail_values: Sequence[float], floor: float = 1.0) -> tuple[float, float]:
    """Median of the settled windows +/- max(floor, 2 sd)."""
    vals = sorted(tail_values)
    if not vals:
        raise ValueError("no windows to take a band from")
    mid = vals[len(vals) // 2]
    mu = mean(vals)
    sd = math.sqrt(math.fsum((x - mu) ** 2 for x in vals) / len(vals))
    half = max(floor, 2 * sd)
    return mid - half, mid + half


def settling_time(profile: Sequence[float], window_s: float, band: tuple[float, float],
                  hold_s: float) -> float:
    """Start (s) of the first window from which the profile stays in band for hold_s.

    Returns the profile's full length when it never does.
    """
    lo, hi = band
    need = max(math.ceil(hold_s / window_s), 1)
    run = 0
    for k, q in enumerate(profile):
        run = run + 1 if lo <= q <= hi else 0
        if run == need:
            return (k - need + 1) * window_s
    return len(profile) * window_s


def read_trace(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")

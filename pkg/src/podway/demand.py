"""Passenger demand: Poisson arrivals, destination matrix, group sizes, dwell times.

The sampling functions are pure in (parameters, u) so they can be checked
against closed forms; DemandStream wires them to a per-station numpy stream.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import accumulate
from typing import Optional, Sequence

import numpy as np

ROW_TOL = 1e-9


class Outcome(str, Enum):
    SERVED = "Served"
    RENEGED = "Reneged"
    IN_SYSTEM = "InSystemAtEnd"


@dataclass(frozen=True)
class TriangularDist:
    min: float
    mode: float
    max: float

    @classmethod
    def constant(cls, value: float) -> "TriangularDist":
        return cls(value, value, value)

    def problems(self, name: str = "triangular") -> list[str]:
        if not (0 <= self.min <= self.mode <= self.max):
            return [f"{name}: need 0 <= min <= mode <= max, got {self.min}, {self.mode}, {self.max}"]
        return []

    @property
    def mean(self) -> float:
        return (self.min + self.mode + self.max) / 3


@dataclass(frozen=True)
class Window:
    start: float
    end: float
    lam: float  # arrivals per hour

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass
class PassengerGroup:
    id: int
    size: int
    origin: int
    destination: int
    t_appear: int
    t_board_start: Optional[int] = None
    t_depart: Optional[int] = None
    t_arrive: Optional[int] = None
    outcome: Outcome = Outcome.IN_SYSTEM
    vehicle: Optional[int] = None


@dataclass
class DemandModel:
    """Arrival intensity windows, destination matrix and dwell distributions.

    `stations` fixes the row/column order of the matrix (ascending node id).
    `odm_windows` optionally pairs window start times with replacement
    matrices; the matrix in force at time t is the last one starting at or
    before t.
    """

    stations: list[int]
    profiles: dict[int, list[Window]]
    odm: list[list[float]]
    group_size_dist: list[float] = field(default_factory=lambda: [1.0])
    board_time: TriangularDist = TriangularDist.constant(8.0)
    alight_time: TriangularDist = TriangularDist.constant(8.0)
    renege_timeout: Optional[float] = None
    odm_windows: list[tuple[float, list[list[float]]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._col = {s: i for i, s in enumerate(self.stations)}

    def index(self, station: int) -> int:
        return self._col[station]

    def odm_at(self, t: float) -> list[list[float]]:
        current = self.odm
        for start, mat in self.odm_windows:
            if start <= t:
                current = mat
        return current

    def problems(self, horizon: float, capacity: int) -> list[str]:
        out: list[str] = []
        n = len(self.stations)
        mats = [("odm", self.odm)] + [(f"odm_windows[{k}]", m) for k, (_, m) in enumerate(self.odm_windows)]
        for name, mat in mats:
            out += odm_problems(mat, n, name)
        for st in self.stations:
            wins = self.profiles.get(st)
            if not wins:
                out.append(f"profiles: station {st} has no arrival windows")
                continue
            out += window_problems(wins, horizon, f"profiles[{st}]")
        for st in self.profiles:
            if st not in self._col:
                out.append(f"profiles: {st} is not a station")
        dist = self.group_size_dist
        if not dist or any(p < 0 for p in dist) or abs(sum(dist) - 1) > ROW_TOL:
            out.append("group_size: probabilities must be non-negative and sum to 1")
        if len(dist) > capacity and any(p > 0 for p in dist[capacity:]):
            out.append(f"group_size: sizes above vehicle capacity {capacity} have positive probability")
        out += self.board_time.problems("board_time")
        out += self.alight_time.problems("alight_time")
        if self.renege_timeout is not None and not self.renege_timeout > 0:
            out.append("renege_timeout must be positive or null")
        return out


def odm_problems(mat: Sequence[Sequence[float]], n: int, name: str = "odm") -> list[str]:
    out = []
    if len(mat) != n:
        return [f"{name}: expected {n} rows, got {len(mat)}"]
    for i, row in enumerate(mat):
        if len(row) != n:
            out.append(f"{name}: row {i} has {len(row)} entries, expected {n}")
            continue
        if any(p < 0 for p in row):
            out.append(f"{name}: row {i} has a negative entry")
        if row[i] != 0:
            out.append(f"{name}: row {i} has non-zero diagonal entry {row[i]}")
        s = math.fsum(row)
        if abs(s - 1.0) > ROW_TOL:
            out.append(f"{name}: row {i} sums to {s}, not 1")
    return out


def window_problems(wins: Sequence[Window], horizon: float, name: str) -> list[str]:
    out = []
    ws = sorted(wins, key=lambda w: w.start)
    if ws[0].start > 0:
        out.append(f"{name}: windows start at {ws[0].start}, not 0")
    for a, b in zip(ws, ws[1:]):
        if b.start != a.end:
            out.append(f"{name}: gap or overlap between {a.end} and {b.start}")
    if ws[-1].end < horizon:
        out.append(f"{name}: windows end at {ws[-1].end}, before horizon {horizon}")
    for w in ws:
        if w.lam < 0:
            out.append(f"{name}: negative intensity {w.lam}")
        if not w.end > w.start:
            out.append(f"{name}: empty window [{w.start}, {w.end})")
    return out


def uniform_odm(n: int) -> list[list[float]]:
    if n < 2:
        raise ValueError("a uniform matrix needs at least two stations")
    p = 1.0 / (n - 1)
    return [[0.0 if i == j else p for j in range(n)] for i in range(n)]


# -- pure samplers ------------------------------------------------------------


def sample_interarrival(lam_per_hour: float, u: float) -> float:
    """Exponential gap in seconds for an intensity given per hour."""
    return -math.log1p(-u) * 3600.0 / lam_per_hour


def _bucket(probs: Sequence[float], u: float) -> int:
    cum = list(accumulate(probs))
    i = bisect.bisect_right(cum, u)
    # guard against a cumulative total a hair below 1; fall back to the last positive entry
    if i >= len(probs):
        i = max(k for k, p in enumerate(probs) if p > 0)
    return i


def sample_destination(odm_row: Sequence[float], u: float) -> int:
    """Column index whose cumulative bucket contains u."""
    return _bucket(odm_row, u)


def sample_group_size(dist: Sequence[float], u: float) -> int:
    """Group size; dist[k] is the probability of size k + 1."""
    return _bucket(dist, u) + 1


def sample_triangular(d: TriangularDist, u: float) -> float:
    a, c, b = d.min, d.mode, d.max
    if b == a:
        return a
    fc = (c - a) / (b - a)
    if u < fc:
        return a + math.sqrt(u * (b - a) * (c - a))
    return b - math.sqrt((1 - u) * (b - a) * (b - c))


def intensity_at(model: DemandModel, station: int, t: float) -> float:
    for w in model.profiles[station]:
        if w.contains(t):
            return w.lam
    raise ValueError(f"time {t} s is outside every arrival window of station {station}")


def window_at(wins: Sequence[Window], t: float) -> Optional[Window]:
    for w in wins:
        if w.contains(t):
            return w
    return None


# -- streams ------------------------------------------------------------------


def station_rng(seed: int, station: int) -> np.random.Generator:
    """Independent stream per station so adding a station leaves the others alone."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), 1, station])))


class DemandStream:
    """Draws for one station: next gap, destination, size and dwell times."""

    def __init__(self, model: DemandModel, station: int, seed: int):
        self.model = model
        self.station = station
        self.row = model.index(station)
        self.rng = station_rng(seed, station)

    def u(self) -> float:
        return float(self.rng.random())

    def next_gap(self, lam: float) -> float:
        return sample_interarrival(lam, self.u())

    def destination(self, t: float) -> int:
        row = self.model.odm_at(t)[self.row]
        return self.model.stations[sample_destination(row, self.u())]

    def group_size(self) -> int:
        return sample_group_size(self.model.group_size_dist, self.u())

    def board_time(self) -> float:
        return sample_triangular(self.model.board_time, self.u())

    def alight_time(self) -> float:
        return sample_triangular(self.model.alight_time, self.u())

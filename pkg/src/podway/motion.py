"""Vehicle kinematics on sectors and the two keeping-up rules.

Profiles are bang-bang in speed-squared space. Over a stretch of track with
speed cap `cap`, entry speed `v0` and a braking envelope K (the vehicle must
be able to satisfy every downstream constraint by braking at b), the speed at
distance x is

    v(x)^2 = min(v0^2 + 2*a*x, cap^2, K - 2*b*x)

which gives accelerate / cruise / decelerate phases with closed-form times.
If K - 2*b*x reaches zero before the end of the stretch the vehicle halts
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

TOL = 1e-9


class KeepingRule(str, Enum):
    OPTIMAL = "optimal"
    CAREFUL = "careful"


class MergeRule(str, Enum):
    FIRST_ARRIVAL = "first_arrival"
    FIXED_PRIORITY = "fixed_priority"


class SeparationBreach(ValueError):
    """The gap to the leader is already below the static separation."""


@dataclass(frozen=True)
class VehicleSpec:
    capacity: int = 4
    v_max: float = 12.0
    a_max: float = 1.5
    b_max: float = 2.5
    b_emerg: float = 5.0
    s_static: float = 10.0
    length: float = 3.5

    def problems(self) -> list[str]:
        out = []
        if self.capacity < 1:
            out.append("vehicle: capacity must be >= 1")
        for name in ("v_max", "a_max", "b_max", "b_emerg", "s_static", "length"):
            if not getattr(self, name) > 0:
                out.append(f"vehicle: {name} must be positive")
        if self.b_emerg < self.b_max:
            out.append("vehicle: b_emerg must be >= b_max")
        return out

    def braking_distance(self, v: float) -> float:
        return v * v / (2 * self.b_max)


def max_speed_careful(gap: float, b: float) -> float:
    """Highest speed from which braking at b stops within `gap`."""
    return math.sqrt(2 * b * max(gap, 0.0))


def max_speed_optimal(gap: float, v_lead: float, s_static: float, b: float,
                      v_cap: float = math.inf) -> float:
    """Highest speed that still halts s_static behind the leader's halt point.

    Both vehicles brake at b starting at the same instant.
    """
    if gap < s_static - TOL:
        raise SeparationBreach(f"gap {gap} m is below the static separation {s_static} m")
    return min(v_cap, math.sqrt(v_lead * v_lead + 2 * b * max(gap - s_static, 0.0)))


def stop_target(rule: KeepingRule, leader_pos: float, leader_v: float,
                length: float, s_static: float, b: float) -> float:
    """Furthest point a follower may stop at behind a leader (front positions)."""
    if rule is KeepingRule.OPTIMAL:
        return leader_pos + leader_v * leader_v / (2 * b) - length - s_static
    return leader_pos - length


# -- profiles ---------------------------------------------------------------


@dataclass(frozen=True)
class Phase:
    t0: float  # seconds from plan start
    dt: float
    x0: float  # distance from plan start
    v0: float
    acc: float

    def at(self, tau: float) -> tuple[float, float]:
        return self.x0 + self.v0 * tau + 0.5 * self.acc * tau * tau, self.v0 + self.acc * tau


@dataclass(frozen=True)
class Profile:
    phases: tuple[Phase, ...]
    distance: float
    v_end: float
    duration: float
    halts: bool

    def at(self, tau: float) -> tuple[float, float]:
        """(distance, speed) tau seconds after the start; clamps past the end."""
        if tau >= self.duration:
            return self.distance, self.v_end
        for ph in self.phases:
            if tau < ph.t0 + ph.dt:
                return ph.at(max(tau - ph.t0, 0.0))
        return self.distance, self.v_end

    def max_stop_point(self, b: float) -> float:
        """Largest x + v^2/2b reached along the profile (it is reached at the end)."""
        return self.distance + self.v_end * self.v_end / (2 * b)


def bang_bang(v0: float, length: float, cap: float, K: float, a: float, b: float) -> Profile:
    """Minimal-time profile over `length` metres under the envelope K.

    Preconditions: v0 <= cap and v0^2 <= K (up to rounding).
    """
    v0 = min(v0, cap, math.sqrt(max(K, 0.0)))
    v0sq = v0 * v0
    x_end = length
    halts = False
    if K - 2 * b * length < 0:
        x_end = max(K / (2 * b), 0.0)
        halts = True

    # where the accel curve meets the braking curve, and where it meets the cap
    x_meet = max((K - v0sq) / (2 * (a + b)), 0.0)
    if v0sq + 2 * a * x_meet <= cap * cap:
        x_acc_end = x_dec_start = x_meet
    else:
        x_acc_end = (cap * cap - v0sq) / (2 * a)
        x_dec_start = max((K - cap * cap) / (2 * b), x_acc_end)

    def speed(x: float) -> float:
        return math.sqrt(max(min(v0sq + 2 * a * x, cap * cap, K - 2 * b * x), 0.0))

    phases: list[Phase] = []
    t = 0.0
    x = 0.0
    v = v0
    # accelerate
    xa = min(x_acc_end, x_end)
    if xa > x:
        v1 = speed(xa) if xa < x_acc_end else math.sqrt(max(min(v0sq + 2 * a * xa, cap * cap), 0.0))
        dt = (v1 - v) / a
        phases.append(Phase(t, dt, x, v, a))
        t, x, v = t + dt, xa, v1
    # cruise
    xc = min(x_dec_start, x_end)
    if xc > x:
        dt = (xc - x) / v if v > 0 else math.inf
        phases.append(Phase(t, dt, x, v, 0.0))
        t, x = t + dt, xc
    # decelerate
    if x_end > x:
        v1 = 0.0 if halts else speed(x_end)
        v1 = min(v1, v)
        dt = (v - v1) / b
        if dt == 0.0 and v > 0:
            dt = (x_end - x) / v
            phases.append(Phase(t, dt, x, v, 0.0))
        else:
            phases.append(Phase(t, dt, x, v, -b))
        t, x, v = t + dt, x_end, v1
    if halts:
        v = 0.0
    return Profile(tuple(phases), x_end, v, t, halts)


def stretch_time(v0: float, v1: float, length: float, cap: float, a: float, b: float) -> float:
    """Time to cover `length` from v0 to v1 as fast as possible under cap."""
    if length <= 0:
        return 0.0
    K = v1 * v1 + 2 * b * length
    return bang_bang(v0, length, cap, K, a, b).duration


def boundary_speeds(lengths: Sequence[float], caps: Sequence[float], a: float, b: float,
                    v_start: float = 0.0, v_end: float = 0.0) -> list[float]:
    """Free-flow speeds at each stretch boundary for a chain of stretches."""
    n = len(lengths)
    vb = [0.0] * (n + 1)
    vb[n] = min(v_end, caps[-1]) if n else v_end
    for i in range(n - 1, -1, -1):
        lim = caps[i] if i == 0 else min(caps[i], caps[i - 1])
        vb[i] = min(lim, math.sqrt(vb[i + 1] ** 2 + 2 * b * lengths[i]))
    vb[0] = min(vb[0], v_start)
    for i in range(n):
        vb[i + 1] = min(vb[i + 1], math.sqrt(vb[i] ** 2 + 2 * a * lengths[i]))
    return vb


def chain_time(lengths: Sequence[float], caps: Sequence[float], a: float, b: float,
               v_start: float = 0.0, v_end: float = 0.0) -> float:
    """Free-flow time along consecutive stretches with per-stretch speed caps."""
    if not lengths:
        return 0.0
    vb = boundary_speeds(lengths, caps, a, b, v_start, v_end)
    return sum(stretch_time(vb[i], vb[i + 1], lengths[i], caps[i], a, b) for i in range(len(lengths)))


def min_trip_time(route_stretches: Sequence[tuple[float, float]], spec: VehicleSpec,
                  v_start: float = 0.0, v_end: float = 0.0) -> float:
    """Uninterrupted travel time over (length, v_limit) stretches, rest to rest by default."""
    lengths = [ln for ln, _ in route_stretches]
    caps = [min(spec.v_max, lim) for _, lim in route_stretches]
    return chain_time(lengths, caps, spec.a_max, spec.b_max, v_start, v_end)


# -- per-sector planning ------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """Speed `v` allowed at distance `d` ahead of the current position."""

    d: float
    v: float = 0.0
    source: Optional[int] = None  # vehicle id when the constraint comes from a vehicle
    tag: str = ""

    def envelope(self, b: float) -> float:
        return self.v * self.v + 2 * b * self.d


@dataclass
class SectorPlan:
    """A committed profile over one sector, anchored at absolute time t0_us."""

    t0_us: int
    x0: float  # offset on the segment at the start
    profile: Profile
    emergency: bool = False
    binding: Optional[Constraint] = None
    end_us: int = 0

    def state_at(self, t_us: int) -> tuple[float, float]:
        dx, v = self.profile.at((t_us - self.t0_us) / 1e6)
        return self.x0 + dx, v

    @property
    def x_end(self) -> float:
        return self.x0 + self.profile.distance


@dataclass(frozen=True)
class TransitResult:
    profile: Profile
    envelope: float
    binding: Optional[Constraint]
    emergency: bool


def plan_sector_transit(v0: float, sector_len: float, cap: float,
                        constraints: Sequence[Constraint], spec: VehicleSpec,
                        tol: float = 1e-6) -> TransitResult:
    """Plan the stretch up to the next sector boundary.

    Returns a profile honouring every constraint; when the entry state already
    violates one, falls back to emergency braking at b_emerg.
    """
    b = spec.b_max
    K = math.inf
    binding = None
    for c in constraints:
        e = c.envelope(b)
        if e < K:
            K, binding = e, c
    K_used = min(K, cap * cap + 2 * b * sector_len)
    if v0 * v0 <= K_used + tol and v0 <= cap + tol:
        return TransitResult(bang_bang(min(v0, cap), sector_len, cap, K_used, spec.a_max, b),
                             K, binding, False)
    be = spec.b_emerg
    stop = v0 * v0 / (2 * be)
    if stop < sector_len:
        prof = Profile((Phase(0.0, v0 / be, 0.0, v0, -be),), stop, 0.0, v0 / be, True)
    else:
        v1 = math.sqrt(v0 * v0 - 2 * be * sector_len)
        prof = Profile((Phase(0.0, (v0 - v1) / be, 0.0, v0, -be),), sector_len, v1, (v0 - v1) / be, False)
    return TransitResult(prof, K, binding, True)

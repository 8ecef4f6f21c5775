
import pytest
from hypothesis import given, strategies as st

from podway.kernel import (
    US,
    Event,
    EventBuffer,
    EventKind,
    InvariantBreach,
    ReplicationConfig,
    derive_seed,
    to_us,
)


def test_events_pop_in_time_then_insertion_order():
    buf = EventBuffer()
    kinds = [EventKind.TRIP_END, EventKind.GROUP_APPEARS, EventKind.HALT, EventKind.RESUME]
    for t, k in zip([5, 3, 5, 3], kinds):
        buf.schedule(Event(t, k))
    got = [(e.t, e.kind) for e in (buf.pop() for _ in range(4))]
    assert got == [(3, EventKind.GROUP_APPEARS), (3, EventKind.RESUME),
                   (5, EventKind.TRIP_END), (5, EventKind.HALT)]
    assert buf.now == 5


@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=200))
def test_pop_sequence_is_sorted_and_stable(times):
    buf = EventBuffer()
    for t in times:
        buf.schedule(Event(t, EventKind.SECTOR_BOUNDARY))
    out = [buf.pop() for _ in times]
    keys = [(e.t, e.seq) for e in out]
    assert keys == sorted(keys)
    assert [e.t for e in out] == sorted(times)


def test_scheduling_into_the_past_is_a_breach():
    buf = EventBuffer()
    buf.schedule(Event(10, EventKind.SIM_END))
    buf.pop()
    with pytest.raises(InvariantBreach):
        buf.schedule(Event(9, EventKind.HALT))


@given(st.floats(0, 1e5, allow_nan=False))
def test_to_us_rounds_up_to_a_whole_microsecond(s):
    us = to_us(s)
    assert us >= s * US - 1e-6 - 1e-3 * max(1.0, s)
    assert us - 1 < s * US


def test_to_us_exact_values():
    assert to_us(1.0) == US
    assert to_us(0.5e-6) == 1
    assert to_us(0.0) == 0


def test_record_omits_missing_fields():
    e = Event(7, EventKind.HALT, vehicle=3, detail={"dist_um": 5})
    e.seq = 2
    assert e.to_record() == {"t_us": 7, "seq": 2, "kind": "Halt", "vehicle": 3, "detail": {"dist_um": 5}}


def test_derive_seed_is_stable_and_sensitive():
    a = derive_seed(1, (("fleet", 8),), 0)
    assert a == derive_seed(1, (("fleet", 8),), 0)
    assert a != derive_seed(1, (("fleet", 8),), 1)
    assert 0 <= a < 2**63


def test_replication_config_checks_warmup():
    assert ReplicationConfig(horizon=10, warmup=0).problems() == []
    assert ReplicationConfig(horizon=10, warmup=10).problems()
    assert ReplicationConfig(horizon=1.5).horizon_us == 1_500_000


def test_ten_thousand_random_events_come_out_sorted():
    import random
    rng = random.Random(5)
    times = [rng.randrange(0, 10**12) for _ in range(10_000)]
    buf = EventBuffer()
    for t in times:
        buf.schedule(Event(t, EventKind.HALT))
    assert [buf.pop().t for _ in times] == sorted(times)
    assert len(buf) == 0 and buf.peek_time() is None

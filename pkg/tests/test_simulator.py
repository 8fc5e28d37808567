import json
from fractions import Fraction

import pytest

from asyncckpt.perfmodel import PerfParams, t_async, t_infinity, t_revolve
from asyncckpt.runtime import FullStorage, Multistage, Revolve
from asyncckpt.simulator import (
    BACKWARD,
    COMPUTE_LANE,
    FETCH,
    FORWARD,
    STALL,
    STORE,
    TRANSFER_LANE,
    simulate,
    timeline_to_json,
)


def compute_events(events):
    return [e for e in events if e.lane == COMPUTE_LANE]


def transfer_events(events):
    return [e for e in events if e.lane == TRANSFER_LANE]


def assert_lane_consistency(events):
    for lane in (COMPUTE_LANE, TRANSFER_LANE):
        lane_events = sorted(
            (e for e in events if e.lane == lane), key=lambda e: (e.start, e.end)
        )
        for a, b in zip(lane_events, lane_events[1:]):
            assert a.end <= b.start, (a, b)


def test_full_storage_timeline():
    events, total = simulate(FullStorage(), PerfParams(4, 1, 1.0, 1.0, 1.0))
    assert total == 8.0
    kinds = [e.kind for e in events]
    assert kinds == [FORWARD] * 4 + [BACKWARD] * 4
    assert [e.from_step for e in events[:4]] == [0, 1, 2, 3]
    assert [e.from_step for e in events[4:]] == [3, 2, 1, 0]
    assert_lane_consistency(events)


def test_compute_lane_contiguous_without_stalls():
    events, total = simulate(FullStorage(), PerfParams(6, 1, 0.5, 0.25, 1.0))
    lane = compute_events(events)
    assert lane[0].start == 0
    for a, b in zip(lane, lane[1:]):
        assert a.end == b.start
    assert lane[-1].end == Fraction(total)


def test_revolve_total_matches_model():
    p = PerfParams(8, 3, 1.0, 1.0, 4.0)
    events, total = simulate(Revolve(3), p)
    assert total == t_revolve(p)
    # 14 forward executions (oracle cost(8, 3)) and 8 backward steps
    assert sum(1 for e in events if e.kind == FORWARD) == 14
    assert sum(1 for e in events if e.kind == BACKWARD) == 8
    assert_lane_consistency(events)


def test_multistage_example_timeline():
    p = PerfParams(8, 100, 1.0, 1.0, 4.0)
    events, total = simulate(Multistage(100), p)
    assert total == 16.0 == t_async(p)
    stores = [e for e in events if e.kind == STORE]
    assert [(float(e.start), float(e.end)) for e in stores] == [(0.0, 4.0), (4.0, 8.0)]
    fetches = [e for e in events if e.kind == FETCH]
    assert len(fetches) == 2
    assert all(e.lane == TRANSFER_LANE for e in stores + fetches)
    assert not [e for e in events if e.kind == STALL]
    assert_lane_consistency(events)


def test_multistage_fallback_is_revolve_timeline():
    p = PerfParams(6, 2, 1.0, 1.0, 50.0)
    events, total = simulate(Multistage(2), p)
    assert total == t_revolve(p) == t_async(p)
    assert not transfer_events(events)


def test_multistage_contention_stalls():
    # forcing I = 2 with a transfer that takes 10 steps of compute
    p = PerfParams(8, 100, 1.0, 1.0, 10.0)
    events, total = simulate(Multistage(100, interval=2), p)
    stalls = [e for e in events if e.kind == STALL]
    assert stalls
    assert total > t_async(p)
    assert_lane_consistency(events)


def test_multistage_streaming_interval_one():
    p = PerfParams(8, 4, 1.0, 1.0, 0.5)
    events, total = simulate(Multistage(4), p)
    assert total == t_infinity(p) == t_async(p)
    assert len([e for e in events if e.kind == STORE]) == 8


@pytest.mark.parametrize("s", [1, 2, 4, 8, 16, 32])
@pytest.mark.parametrize("n", [8, 32, 128])
def test_model_agreement_grid(n, s):
    for t_a, t_b, t_t in [(1.0, 1.0, 4.0), (1.0, 2.0, 16.0), (0.003, 0.006, 0.012)]:
        p = PerfParams(n, s, t_a, t_b, t_t)
        _, total_full = simulate(FullStorage(), p)
        assert total_full == t_infinity(p)
        _, total_rev = simulate(Revolve(s), p)
        assert total_rev == t_revolve(p)
        _, total_ms = simulate(Multistage(s), p)
        assert total_ms == t_async(p)
        assert total_ms <= total_rev


def test_timeline_json_shape():
    p = PerfParams(8, 3, 1.0, 1.0, 4.0)
    strategy = Multistage(3)
    events, total = simulate(strategy, p)
    blob = json.loads(timeline_to_json(strategy, events, total))
    assert blob["strategy"] == "multistage"
    assert blob["total"] == total
    assert len(blob["events"]) == len(events)
    assert set(blob["events"][0]) == {"kind", "from", "to", "start", "end", "lane"}

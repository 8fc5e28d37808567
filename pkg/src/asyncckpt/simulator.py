"""Discrete-event timelines for the three strategies, on a virtual clock.

The simulator validates the analytic model rather than the implementation
(the storage module's simulated backend covers the latter with real threads
and real sleeping). Event times are exact rationals, so totals agree with
the perfmodel formulas bit for bit whenever the model's assumptions hold.

Timeline semantics per strategy:

* FullStorage: n unit forward events, then n unit backward events.
* Revolve: the generated schedule, one unit compute event per step.
* Multistage: a streaming forward sweep whose store transfers ride the
  transfer lane (a store still in flight when the next boundary arrives
  blocks compute: a Stall event appears, exactly like the runtime); then a
  backward phase that reverses one interval at a time. The first traversal
  of each interval is booked inside the sweep, so an interval's reversal
  charges only its inner schedule beyond that first pass: the events after
  the schedule's first Reverse. Boundary fetches occupy the transfer lane
  (serialized, never overlapping) but do not delay compute: the model
  assumes prefetches land inside the compute they overlap.

With the calibrated interval I = ceil(t_t / t_a) a store always fits in its
interval, no stalls occur, and totals equal t_infinity / t_revolve / t_async
exactly. Forcing a smaller explicit interval produces stalls and a total
above t_async: the contention case the model excludes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .perfmodel import PerfParams, interval_length
from .runtime import FullStorage, Multistage, Revolve, Strategy
from .schedule import (
    Action,
    Advance,
    Reverse,
    ScheduleParams,
    TapeForward,
    plan_multistage,
    revolve_schedule,
    taped_schedule,
)

FORWARD = "forward_compute"
BACKWARD = "backward_compute"
STORE = "store"
FETCH = "fetch"
STALL = "stall"

COMPUTE_LANE = "compute"
TRANSFER_LANE = "transfer"


@dataclass(frozen=True)
class TimelineEvent:
    kind: str
    from_step: int
    to_step: int
    start: Fraction
    end: Fraction
    lane: str


class _Timeline:
    def __init__(self, t_a: Fraction, t_b: Fraction, t_t: Fraction) -> None:
        self.t_a = t_a
        self.t_b = t_b
        self.t_t = t_t
        self.clock = Fraction(0)
        self.transfer_free = Fraction(0)
        self.events: list[TimelineEvent] = []

    def forward_steps(self, start_step: int, stop_step: int, offset: int = 0) -> None:
        for step in range(start_step, stop_step):
            self._compute(FORWARD, offset + step, offset + step + 1, self.t_a)

    def backward_step(self, step: int, offset: int = 0) -> None:
        self._compute(BACKWARD, offset + step, offset + step + 1, self.t_b)

    def _compute(self, kind: str, frm: int, to: int, duration: Fraction) -> None:
        self.events.append(
            TimelineEvent(kind, frm, to, self.clock, self.clock + duration, COMPUTE_LANE)
        )
        self.clock += duration

    def stall_until(self, when: Fraction, at_step: int) -> None:
        if when > self.clock:
            self.events.append(
                TimelineEvent(STALL, at_step, at_step, self.clock, when, COMPUTE_LANE)
            )
            self.clock = when

    def transfer(self, kind: str, key: int, issue: Fraction) -> Fraction:
        """Queue a transfer on the single transfer lane; returns completion."""
        start = max(issue, self.transfer_free)
        end = start + self.t_t
        self.events.append(TimelineEvent(kind, key, key, start, end, TRANSFER_LANE))
        self.transfer_free = end
        return end


def _schedule_events(tl: _Timeline, actions: Sequence[Action], offset: int = 0) -> None:
    for action in actions:
        if isinstance(action, (Advance, TapeForward)):
            tl.forward_steps(action.from_step, action.to_step, offset)
        elif isinstance(action, Reverse):
            tl.backward_step(action.step, offset)


def _post_first_reverse(actions: Sequence[Action]) -> Sequence[Action]:
    for i, action in enumerate(actions):
        if isinstance(action, Reverse):
            return actions[i:]
    return ()


def simulate(
    strategy: Strategy, p: PerfParams
) -> tuple[list[TimelineEvent], float]:
    """Simulate one forward/backward pass; returns (events, total seconds)."""
    tl = _Timeline(Fraction(p.t_a), Fraction(p.t_b), Fraction(p.t_t))
    if isinstance(strategy, FullStorage):
        _schedule_events(tl, taped_schedule(p.n))
    elif isinstance(strategy, Revolve):
        _schedule_events(tl, revolve_schedule(ScheduleParams(p.n, strategy.slots)))
    elif isinstance(strategy, Multistage):
        interval = strategy.interval
        if interval is None:
            interval = interval_length(p.t_t, p.t_a)
        plan = plan_multistage(p.n, strategy.slots, interval)
        if plan.fallback:
            _schedule_events(tl, plan.segments[0].actions)
        else:
            _simulate_multistage(tl, plan)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return tl.events, float(tl.clock)


def _simulate_multistage(tl: _Timeline, plan) -> None:
    boundaries = plan.boundaries
    # Forward sweep: issue each boundary's store on arrival, blocking while
    # the previous store is still on the wire.
    for idx, boundary in enumerate(boundaries):
        tl.stall_until(tl.transfer_free, boundary)
        tl.transfer(STORE, boundary, tl.clock)
        end = boundaries[idx + 1] if idx + 1 < len(boundaries) else plan.n
        tl.forward_steps(boundary, end)
    # Backward phase, descending. The fetch for segment j-1 is issued the
    # moment segment j starts reversing; the first fetch goes out at sweep
    # end. Fetches never block compute in this model.
    segments = plan.segments
    tl.transfer(FETCH, segments[-1].start, tl.clock)
    for j in range(len(segments) - 1, -1, -1):
        segment = segments[j]
        if j > 0:
            tl.transfer(FETCH, segments[j - 1].start, tl.clock)
        _schedule_events(tl, _post_first_reverse(segment.actions), segment.start)


def strategy_name(strategy: Strategy) -> str:
    if isinstance(strategy, FullStorage):
        return "full"
    if isinstance(strategy, Revolve):
        return "revolve"
    if isinstance(strategy, Multistage):
        return "multistage"
    raise TypeError(f"unknown strategy {strategy!r}")


def timeline_to_json(strategy: Strategy, events: Sequence[TimelineEvent], total: float) -> str:
    return json.dumps(
        {
            "strategy": strategy_name(strategy),
            "total": total,
            "events": [
                {
                    "kind": e.kind,
                    "from": e.from_step,
                    "to": e.to_step,
                    "start": float(e.start),
                    "end": float(e.end),
                    "lane": e.lane,
                }
                for e in events
            ],
        }
    )

"""Checkpointing schedules: optimal single-level reversal plans, recompute
factors, and two-level interval plans.

Everything in this module is pure computation over immutable inputs; no I/O
and no timing. States are numbered 0..n where state k is the program state
after k forward steps (state 0 is the given input). Reversing step k consumes
the taped state k together with the adjoint at k+1.

Slot convention
---------------
``s`` counts checkpoint slots available to the scheduler in addition to the
one live working state. A taped segment of length L therefore needs L-1 free
slots on top of the live state, so a whole problem of n steps can be reversed
without recomputation exactly when ``s >= n - 1``. The cost metric counts
forward-step executions only; saving and loading checkpoints is free.

The minimal cost obeys

    cost(1, s) = 1
    cost(n, s) = n                        if n <= s + 1
    cost(n, s) = min over 0 < k < n of
                 k + cost(n - k, s - 1) + cost(k, s)   otherwise

where k enumerates the first checkpoint placement: save the segment start,
advance k steps, reverse the right part with that slot pinned, restore, and
reverse the left part with the full budget back. With ``s = 1`` this comes to
n(n+1)/2 - 1 for n >= 2 (the final pair of steps fits on the tape).
"""

from __future__ import annotations

import heapq
import json
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

import numpy as np

from .errors import InfeasibleSchedule

# Cost values stay far below this sentinel (worst case n(n+1)/2 - 1), so
# sums involving it never overflow int64.
_INF = np.int64(1) << 40


@dataclass(frozen=True)
class ScheduleParams:
    """Problem size for a single-level schedule.

    n: number of forward steps to reverse (>= 1).
    s: checkpoint slots available, excluding the live working state (>= 0).
    """

    n: int
    s: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if self.n > 1 and self.s == 0:
            raise InfeasibleSchedule(
                f"cannot reverse {self.n} steps with zero checkpoint slots"
            )


@dataclass(frozen=True)
class Advance:
    """Recompute forward from ``from_step`` to ``to_step``, keeping nothing."""

    from_step: int
    to_step: int


@dataclass(frozen=True)
class SaveCheckpoint:
    """Copy the current state (at ``step``) into slot ``slot``."""

    step: int
    slot: int


@dataclass(frozen=True)
class LoadCheckpoint:
    """Make the state saved in ``slot`` the current state."""

    slot: int


@dataclass(frozen=True)
class TapeForward:
    """Run forward from ``from_step`` to ``to_step`` retaining every
    intermediate state for immediate reversal."""

    from_step: int
    to_step: int


@dataclass(frozen=True)
class Reverse:
    """Apply one backward step, consuming the taped state for ``step``."""

    step: int


@dataclass(frozen=True)
class Done:
    """Schedule terminator."""


Action = Union[Advance, SaveCheckpoint, LoadCheckpoint, TapeForward, Reverse, Done]


# ---------------------------------------------------------------------------
# Cost table


class _CostCache:
    """Grow-only cache of the bottom-up cost table c[s, n]."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._n = 0
        self._s = 0
        self._table: Optional[np.ndarray] = None

    def ensure(self, n: int, s: int) -> np.ndarray:
        with self._lock:
            if self._table is None or n > self._n or s > self._s:
                self._n = max(n, self._n)
                self._s = max(s, self._s)
                self._table = _build_cost_table(self._n, self._s)
            return self._table


def _build_cost_table(n_max: int, s_max: int) -> np.ndarray:
    c = np.full((s_max + 1, n_max + 1), _INF, dtype=np.int64)
    c[:, 0] = 0
    if n_max >= 1:
        c[:, 1] = 1
    for s in range(s_max + 1):
        top = min(s + 1, n_max)
        if top >= 2:
            c[s, 2 : top + 1] = np.arange(2, top + 1)
        if s == 0:
            continue
        for n in range(s + 2, n_max + 1):
            ks = np.arange(1, n, dtype=np.int64)
            # k + cost(n - k, s - 1) + cost(k, s)
            vals = ks + c[s - 1, n - 1 : 0 : -1] + c[s, 1:n]
            c[s, n] = vals.min()
    return c


_cache = _CostCache()


def forward_cost(n: int, s: int) -> int:
    """Minimal number of forward-step executions to reverse n steps with s
    slots. Raises InfeasibleSchedule when n > 1 and s == 0."""
    params = ScheduleParams(n, s)
    table = _cache.ensure(params.n, params.s)
    value = int(table[params.s, params.n])
    if value >= int(_INF):
        raise InfeasibleSchedule(f"no schedule for n={n}, s={s}")
    return value


def recompute_factor(n: int, s: int) -> Fraction:
    """Exact recompute factor: forward_cost(n, s) / n, as a Fraction."""
    return Fraction(forward_cost(n, s), n)


def _best_split(length: int, slots: int, table: np.ndarray) -> int:
    """Smallest k minimising k + cost(length-k, slots-1) + cost(k, slots)."""
    ks = np.arange(1, length, dtype=np.int64)
    vals = ks + table[slots - 1, length - 1 : 0 : -1] + table[slots, 1:length]
    return int(np.argmin(vals)) + 1


# ---------------------------------------------------------------------------
# Schedule generation


def revolve_schedule(params: ScheduleParams) -> list[Action]:
    """Generate a minimal-recomputation reversal schedule.

    The returned actions replay validly (see validate_schedule) and their
    forward-execution count equals ``forward_cost(params.n, params.s)``.
    Among equal-cost first-checkpoint positions the smallest is chosen, and
    slot ids are allocated lowest-free-first, so output is deterministic.
    """
    table = _cache.ensure(params.n, params.s)
    free: list[int] = list(range(params.s))
    heapq.heapify(free)
    out: list[Action] = []
    _emit_segment(0, params.n, params.s, free, table, out)
    out.append(Done())
    return out


def _emit_segment(
    lo: int,
    hi: int,
    slots: int,
    free: list[int],
    table: np.ndarray,
    out: list[Action],
) -> None:
    # The left part after a split is handled iteratively: only the right
    # part recurses, so the call depth is bounded by the slot count.
    while True:
        length = hi - lo
        if length == 0:
            return
        if length <= slots + 1:
            out.append(TapeForward(lo, hi))
            for step in range(hi - 1, lo - 1, -1):
                out.append(Reverse(step))
            return
        if slots == 0:
            raise InfeasibleSchedule(
                f"segment [{lo}, {hi}) cannot be reversed without slots"
            )
        k = _best_split(length, slots, table)
        slot = heapq.heappop(free)
        out.append(SaveCheckpoint(lo, slot))
        out.append(Advance(lo, lo + k))
        _emit_segment(lo + k, hi, slots - 1, free, table, out)
        out.append(LoadCheckpoint(slot))
        heapq.heappush(free, slot)
        hi = lo + k


def schedule_forward_executions(actions: Iterable[Action]) -> int:
    """Forward-step executions covered by Advance and TapeForward actions."""
    total = 0
    for action in actions:
        if isinstance(action, (Advance, TapeForward)):
            total += action.to_step - action.from_step
    return total


# ---------------------------------------------------------------------------
# Multistage plans


@dataclass(frozen=True)
class PlanSegment:
    """One interval of a multistage plan.

    ``actions`` use segment-relative step numbering over [0, end - start);
    executors add ``start`` back when applying them.
    """

    start: int
    end: int
    actions: tuple[Action, ...]


@dataclass(frozen=True)
class MultistagePlan:
    n: int
    s: int
    interval: int
    boundaries: tuple[int, ...]
    segments: tuple[PlanSegment, ...]
    fallback: bool

    @property
    def forward_executions(self) -> int:
        """Total forward executions across all inner schedules."""
        return sum(schedule_forward_executions(seg.actions) for seg in self.segments)


def taped_schedule(length: int) -> tuple[Action, ...]:
    """Tape-everything schedule: one forward pass retaining all states, then
    reverse them in place. Needs length - 1 slots of capacity."""
    actions: list[Action] = [TapeForward(0, length)]
    actions.extend(Reverse(step) for step in range(length - 1, -1, -1))
    actions.append(Done())
    return tuple(actions)


def plan_multistage(n: int, s: int, interval: int) -> MultistagePlan:
    """Split n steps into intervals whose boundary states go to Level 2.

    Boundaries are the multiples of ``interval`` below n. Each interval gets
    a plain tape-and-reverse inner schedule when it fits the slot budget
    (length <= s + 1), otherwise a revolve schedule over the interval. When
    ``interval >= n`` there is no point storing anything: the plan falls back
    to a single revolve schedule over [0, n).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if interval < 1:
        raise ValueError(f"interval must be >= 1, got {interval}")
    if interval >= n:
        inner = tuple(revolve_schedule(ScheduleParams(n, s)))
        segment = PlanSegment(0, n, inner)
        return MultistagePlan(
            n=n,
            s=s,
            interval=interval,
            boundaries=(0,),
            segments=(segment,),
            fallback=True,
        )
    boundaries = tuple(range(0, n, interval))
    segments = []
    for start in boundaries:
        end = min(start + interval, n)
        length = end - start
        if length <= s + 1:
            actions = taped_schedule(length)
        else:
            actions = tuple(revolve_schedule(ScheduleParams(length, s)))
        segments.append(PlanSegment(start, end, actions))
    return MultistagePlan(
        n=n,
        s=s,
        interval=interval,
        boundaries=boundaries,
        segments=tuple(segments),
        fallback=False,
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    errors: tuple[str, ...]
    forward_executions: int
    peak_slot_occupancy: int
    peak_tape_length: int
    peak_state_capacity: int
    reverses_seen: int


def slot_read_liveness(actions: Iterable[Action]) -> dict[int, int]:
    """Map action index of each SaveCheckpoint to the index of the last
    LoadCheckpoint that reads that write (or -1 if never read).

    A slot's bytes stop counting against capacity after their final read;
    overwriting a live slot before that is a schedule bug.
    """
    last_read: dict[int, int] = {}
    open_write: dict[int, int] = {}
    for idx, action in enumerate(actions):
        if isinstance(action, SaveCheckpoint):
            open_write[action.slot] = idx
            last_read[idx] = -1
        elif isinstance(action, LoadCheckpoint) and action.slot in open_write:
            last_read[open_write[action.slot]] = idx
    return last_read


def validate_schedule(actions: list[Action], params: ScheduleParams) -> ValidityReport:
    """Replay actions against an abstract tape and slot pool.

    Checks that every Reverse{k} happens exactly once in strictly decreasing
    order with state k taped, that slots are written before they are read,
    and that the state capacity (live slots plus taped states beyond the one
    live working state) never exceeds s. Invalid schedules produce a failing
    report; nothing raises.
    """
    n, s = params.n, params.s
    errors: list[str] = []
    last_read = slot_read_liveness(actions)

    current = 0
    slots: dict[int, tuple[int, int]] = {}  # slot -> (step, write index)
    tape: list[int] = []
    tape_set: set[int] = set()
    next_reverse = n - 1
    reverses = 0
    forward = 0
    peak_slots = 0
    peak_tape = 0
    peak_capacity = 0
    finished = False

    def note_capacity() -> None:
        nonlocal peak_slots, peak_tape, peak_capacity
        peak_slots = max(peak_slots, len(slots))
        peak_tape = max(peak_tape, len(tape))
        peak_capacity = max(peak_capacity, len(slots) + max(0, len(tape) - 1))

    for idx, action in enumerate(actions):
        if finished:
            errors.append(f"action {idx}: appears after Done")
            break
        if isinstance(action, Advance):
            if action.from_step != current:
                errors.append(
                    f"action {idx}: Advance from {action.from_step}, "
                    f"current state is {current}"
                )
            if not 0 <= action.from_step <= action.to_step <= n:
                errors.append(f"action {idx}: Advance range out of bounds")
            forward += max(0, action.to_step - action.from_step)
            current = action.to_step
        elif isinstance(action, TapeForward):
            if action.from_step != current:
                errors.append(
                    f"action {idx}: TapeForward from {action.from_step}, "
                    f"current state is {current}"
                )
            if not 0 <= action.from_step < action.to_step <= n:
                errors.append(f"action {idx}: TapeForward range invalid")
            else:
                for step in range(action.from_step, action.to_step):
                    if step in tape_set:
                        errors.append(f"action {idx}: step {step} taped twice")
                    tape.append(step)
                    tape_set.add(step)
                forward += action.to_step - action.from_step
                current = action.to_step
        elif isinstance(action, SaveCheckpoint):
            if not 0 <= action.slot < s:
                errors.append(f"action {idx}: slot {action.slot} out of range")
                continue
            if action.step != current:
                errors.append(
                    f"action {idx}: SaveCheckpoint of {action.step}, "
                    f"current state is {current}"
                )
            if action.slot in slots and last_read.get(slots[action.slot][1], -1) > idx:
                errors.append(
                    f"action {idx}: slot {action.slot} overwritten before last read"
                )
            slots[action.slot] = (current, idx)
        elif isinstance(action, LoadCheckpoint):
            if action.slot not in slots:
                errors.append(f"action {idx}: load from unwritten slot {action.slot}")
                continue
            step, write_idx = slots[action.slot]
            current = step
            if last_read.get(write_idx, -1) == idx:
                del slots[action.slot]  # final read: the data is dead now
        elif isinstance(action, Reverse):
            if action.step != next_reverse:
                errors.append(
                    f"action {idx}: Reverse {action.step} out of order "
                    f"(expected {next_reverse})"
                )
            if action.step in tape_set:
                tape_set.remove(action.step)
                tape.remove(action.step)
            else:
                errors.append(f"action {idx}: Reverse {action.step} without taped state")
            next_reverse -= 1
            reverses += 1
        elif isinstance(action, Done):
            finished = True
        else:
            errors.append(f"action {idx}: unknown action {action!r}")
        note_capacity()

    if reverses != n:
        errors.append(f"{reverses} of {n} backward steps performed")
    if peak_capacity > s:
        errors.append(f"state capacity {peak_capacity} exceeds budget {s}")
    return ValidityReport(
        valid=not errors,
        errors=tuple(errors),
        forward_executions=forward,
        peak_slot_occupancy=peak_slots,
        peak_tape_length=peak_tape,
        peak_state_capacity=peak_capacity,
        reverses_seen=reverses,
    )


# ---------------------------------------------------------------------------
# JSON dump format


def action_to_obj(action: Action) -> dict:
    if isinstance(action, Advance):
        return {"op": "advance", "from": action.from_step, "to": action.to_step}
    if isinstance(action, SaveCheckpoint):
        return {"op": "save", "step": action.step, "slot": action.slot}
    if isinstance(action, LoadCheckpoint):
        return {"op": "load", "slot": action.slot}
    if isinstance(action, TapeForward):
        return {"op": "tape", "from": action.from_step, "to": action.to_step}
    if isinstance(action, Reverse):
        return {"op": "reverse", "step": action.step}
    if isinstance(action, Done):
        return {"op": "done"}
    raise TypeError(f"not a schedule action: {action!r}")


def action_from_obj(obj: dict) -> Action:
    op = obj["op"]
    if op == "advance":
        return Advance(obj["from"], obj["to"])
    if op == "save":
        return SaveCheckpoint(obj["step"], obj["slot"])
    if op == "load":
        return LoadCheckpoint(obj["slot"])
    if op == "tape":
        return TapeForward(obj["from"], obj["to"])
    if op == "reverse":
        return Reverse(obj["step"])
    if op == "done":
        return Done()
    raise ValueError(f"unknown op {op!r}")


def actions_to_json(actions: Iterable[Action]) -> str:
    return json.dumps([action_to_obj(a) for a in actions])


def actions_from_json(text: str) -> list[Action]:
    return [action_from_obj(obj) for obj in json.loads(text)]

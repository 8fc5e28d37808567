"""Executes a forward/backward operator pair under a reversal strategy.

Strategies:

* FullStorage: tape every state during one forward pass, reverse in place.
* Revolve: run a minimal-recomputation single-level schedule with s slots.
* Multistage: stream every I-th state to a Level-2 backend during a forward
  sweep (one store in flight at a time; the compute blocks, accumulating
  stall time, if a store is still running when the next boundary arrives),
  clear Level 1, then reverse interval by interval. Each interval's boundary
  state is fetched back; the fetch for the next-lower interval is issued
  when the current interval starts reversing, so it overlaps compute.

States and adjoints are opaque ``bytes`` of fixed length. Operators must be
deterministic (same input bytes give the same output bytes); that is what
makes the step-0 adjoint bit-identical across strategies. The step index is
passed to the operators because recurrent steps consume per-step inputs.

Setting the environment variable CKPT_DISABLE_PREFETCH=1 forces each fetch
to be issued synchronously right before the interval that needs it; results
are unchanged, only stall time grows.

Execution counters: ``forward_evals`` counts every call of forward_step.
A multistage run spends n calls on the forward sweep plus the inner-schedule
cost of each interval, so its measured factor is one plus the recompute
factor of a single interval, independent of n. The fallback case (interval
>= n) runs plain revolve and does no Level-2 traffic.
"""

from __future__ import annotations

import os
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence, Union

from .errors import ExecutionError, SizeMismatch
from .perfmodel import interval_length
from .schedule import (
    Action,
    Advance,
    Done,
    LoadCheckpoint,
    MultistagePlan,
    Reverse,
    SaveCheckpoint,
    ScheduleParams,
    TapeForward,
    plan_multistage,
    revolve_schedule,
    slot_read_liveness,
    taped_schedule,
)
from .storage import CheckpointPayload, Level1Pool, Level2Backend

ForwardStep = Callable[[int, bytes], bytes]
BackwardStep = Callable[[int, bytes, bytes], bytes]
SeedSource = Union[bytes, Callable[[bytes], bytes]]


@dataclass(frozen=True)
class OperatorPair:
    """Deterministic forward and backward operators over byte states.

    forward_step(k, state_k) -> state_{k+1}
    backward_step(k, state_k, adjoint_{k+1}) -> adjoint_k
    adjoint_seed: the adjoint at step n, either as concrete bytes or as a
    callable applied to the final state once the forward pass reaches it.
    """

    forward_step: ForwardStep
    backward_step: BackwardStep
    state_size: int
    n_steps: int
    adjoint_seed: SeedSource

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.state_size <= 0:
            raise ValueError(f"state_size must be positive, got {self.state_size}")

    def seed_for(self, final_state: bytes) -> bytes:
        if callable(self.adjoint_seed):
            return self.adjoint_seed(final_state)
        return bytes(self.adjoint_seed)


@dataclass
class ExecutionStats:
    forward_evals: int = 0
    backward_evals: int = 0
    stores_issued: int = 0
    prefetches_issued: int = 0
    stall_seconds: float = 0.0
    peak_l1_bytes: int = 0
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FullStorage:
    pass


@dataclass(frozen=True)
class Revolve:
    slots: int


@dataclass(frozen=True)
class Multistage:
    slots: int
    interval: Optional[int] = None  # None: calibrate, then ceil(t_t / t_a)


Strategy = Union[FullStorage, Revolve, Multistage]


class _ByteLedger:
    """Exact count of Level-1 checkpoint, tape, and transfer-buffer bytes.

    The live working state is not counted; transfer buffers are counted from
    the moment a transfer is issued until its payload is waited for (or, for
    stores, until the ticket is retired), which makes the peak independent
    of background-thread timing.
    """

    def __init__(self) -> None:
        self.slot_bytes = 0
        self.tape_bytes = 0
        self.transfer_bytes = 0
        self.peak = 0

    def _bump(self) -> None:
        total = self.slot_bytes + self.tape_bytes + self.transfer_bytes
        if total > self.peak:
            self.peak = total

    def set_slots(self, nbytes: int) -> None:
        self.slot_bytes = nbytes
        self._bump()

    def add_tape(self, nbytes: int) -> None:
        self.tape_bytes += nbytes
        self._bump()

    def drop_tape(self, nbytes: int) -> None:
        self.tape_bytes -= nbytes

    def add_transfer(self, nbytes: int) -> None:
        self.transfer_bytes += nbytes
        self._bump()

    def drop_transfer(self, nbytes: int) -> None:
        self.transfer_bytes -= nbytes


class _Execution:
    """Mutable state of one run: counters, byte ledger, adjoint register."""

    def __init__(self, ops: OperatorPair) -> None:
        self.ops = ops
        self.n = ops.n_steps
        self.state_size = ops.state_size
        self.stats = ExecutionStats()
        self.ledger = _ByteLedger()
        self.adjoint: Optional[bytes] = None
        self._seeded = False

    def forward(self, step: int, state: bytes) -> bytes:
        state = self.ops.forward_step(step, state)
        self.stats.forward_evals += 1
        if step + 1 == self.n and not self._seeded:
            self.adjoint = self.ops.seed_for(state)
            self._seeded = True
        return state

    def seed_with(self, adjoint: bytes) -> None:
        self.adjoint = adjoint
        self._seeded = True

    def backward(self, step: int, state: bytes) -> None:
        if self.adjoint is None:
            raise ExecutionError(f"Reverse {step} before the adjoint was seeded")
        self.adjoint = self.ops.backward_step(step, state, self.adjoint)
        self.stats.backward_evals += 1

    def wait_transfer(self, backend: Level2Backend, ticket):
        """Wait for a ticket, charging blocked time to stall_seconds."""
        if backend.poll(ticket):
            return backend.wait(ticket)
        t0 = time.perf_counter()
        result = backend.wait(ticket)
        self.stats.stall_seconds += time.perf_counter() - t0
        return result

    def run_schedule(
        self,
        actions: Sequence[Action],
        offset: int,
        state: bytes,
        pool: Level1Pool,
    ) -> bytes:
        """Replay one schedule segment; step numbers in actions are relative
        to ``offset``. Returns the final live state."""
        last_read = slot_read_liveness(actions)
        write_idx: dict[int, int] = {}  # slot -> index of its latest Save
        tape: list[tuple[int, bytes]] = []
        current = 0  # relative
        for idx, action in enumerate(actions):
            if isinstance(action, (Advance, TapeForward)):
                if action.from_step != current:
                    raise ExecutionError(
                        f"action {idx} starts at {action.from_step}, state is at {current}"
                    )
                taping = isinstance(action, TapeForward)
                for rel in range(action.from_step, action.to_step):
                    if taping:
                        tape.append((rel, state))
                        self.ledger.add_tape(self.state_size)
                    state = self.forward(offset + rel, state)
                current = action.to_step
            elif isinstance(action, SaveCheckpoint):
                pool.save(action.slot, CheckpointPayload(offset + current, state))
                write_idx[action.slot] = idx
                self.ledger.set_slots(pool.occupied_bytes)
            elif isinstance(action, LoadCheckpoint):
                payload = pool.load(action.slot)
                state = payload.data
                current = payload.step - offset
                # Free the slot after its final read so tape and checkpoints
                # together never exceed the s + 1 state budget.
                if last_read.get(write_idx.get(action.slot, -1), -2) == idx:
                    pool.free(action.slot)
                    self.ledger.set_slots(pool.occupied_bytes)
            elif isinstance(action, Reverse):
                if not tape or tape[-1][0] != action.step:
                    raise ExecutionError(f"Reverse {action.step} without taped state")
                _, taped_state = tape.pop()
                self.ledger.drop_tape(self.state_size)
                self.backward(offset + action.step, taped_state)
            elif isinstance(action, Done):
                break
            else:
                raise ExecutionError(f"unknown action {action!r}")
        pool.clear()
        self.ledger.set_slots(0)
        return state


def _run_plain(ex: _Execution, actions: Sequence[Action], slots: int, state: bytes) -> None:
    ex.run_schedule(actions, 0, state, Level1Pool(slots, ex.state_size))


def _run_multistage(
    ex: _Execution,
    plan: MultistagePlan,
    backend: Level2Backend,
    initial_state: bytes,
) -> None:
    _multistage_forward(ex, plan, backend, initial_state)
    _multistage_backward(ex, plan, backend)


def _multistage_forward(
    ex: _Execution,
    plan: MultistagePlan,
    backend: Level2Backend,
    initial_state: bytes,
) -> bytes:
    """Advance 0..n once, streaming each boundary state to Level 2. At most
    one store is in flight; a still-running store blocks the next boundary
    (counted as stall) rather than being skipped."""
    state = initial_state
    ticket = None
    boundaries = plan.boundaries
    for idx, boundary in enumerate(boundaries):
        if ticket is not None:
            ex.wait_transfer(backend, ticket)
            ex.ledger.drop_transfer(ex.state_size)
        ticket = backend.begin_store(boundary, CheckpointPayload(boundary, state))
        ex.stats.stores_issued += 1
        ex.ledger.add_transfer(ex.state_size)
        end = boundaries[idx + 1] if idx + 1 < len(boundaries) else plan.n
        for step in range(boundary, end):
            state = ex.forward(step, state)
    if ticket is not None:
        ex.wait_transfer(backend, ticket)
        ex.ledger.drop_transfer(ex.state_size)
    return state


def _multistage_backward(
    ex: _Execution, plan: MultistagePlan, backend: Level2Backend
) -> None:
    """Reverse intervals in descending order, prefetching the next-lower
    boundary as each interval starts reversing."""
    prefetch = os.environ.get("CKPT_DISABLE_PREFETCH") != "1"
    segments = plan.segments
    tickets: dict[int, object] = {}

    def issue_fetch(key: int) -> None:
        tickets[key] = backend.begin_fetch(key)
        ex.stats.prefetches_issued += 1
        ex.ledger.add_transfer(ex.state_size)

    if prefetch:
        issue_fetch(segments[-1].start)
    for j in range(len(segments) - 1, -1, -1):
        segment = segments[j]
        if not prefetch:
            issue_fetch(segment.start)
        payload = ex.wait_transfer(backend, tickets.pop(segment.start))
        if prefetch and j > 0:
            issue_fetch(segments[j - 1].start)
        ex.ledger.drop_transfer(ex.state_size)  # fetched bytes go live
        pool = Level1Pool(plan.s, ex.state_size)
        ex.run_schedule(segment.actions, segment.start, payload.data, pool)


def _resolve_interval(
    strategy: Multistage,
    ops: OperatorPair,
    backend: Level2Backend,
    initial_state: bytes,
) -> int:
    if strategy.interval is not None:
        if strategy.interval < 1:
            raise ValueError(f"interval must be >= 1, got {strategy.interval}")
        return strategy.interval
    t_a, _, t_t = calibrate(ops, backend, 5, initial_state)
    return interval_length(t_t, t_a)


def execute(
    strategy: Strategy,
    ops: OperatorPair,
    initial_state: bytes,
    backend: Optional[Level2Backend] = None,
) -> tuple[bytes, ExecutionStats]:
    """Run one forward/backward pass and return (step-0 adjoint, stats).

    The adjoint is bit-identical across strategies for the same operators
    and inputs. Multistage requires a backend; the other strategies ignore
    it. One execution at a time per backend: the runtime is not reentrant.
    """
    if len(initial_state) != ops.state_size:
        raise SizeMismatch(
            f"initial state is {len(initial_state)} bytes, expected {ops.state_size}"
        )
    plan = None
    if isinstance(strategy, Multistage):
        if backend is None:
            raise ValueError("Multistage requires a Level-2 backend")
        # calibration is setup, kept outside the timed window
        interval = _resolve_interval(strategy, ops, backend, initial_state)
        plan = plan_multistage(ops.n_steps, strategy.slots, interval)
    ex = _Execution(ops)
    t0 = time.perf_counter()
    if isinstance(strategy, FullStorage):
        _run_plain(ex, taped_schedule(ops.n_steps), 0, bytes(initial_state))
    elif isinstance(strategy, Revolve):
        actions = revolve_schedule(ScheduleParams(ops.n_steps, strategy.slots))
        _run_plain(ex, actions, strategy.slots, bytes(initial_state))
    elif isinstance(strategy, Multistage):
        assert plan is not None
        if plan.fallback:
            _run_plain(ex, plan.segments[0].actions, strategy.slots, bytes(initial_state))
        else:
            _run_multistage(ex, plan, backend, bytes(initial_state))
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    ex.stats.wall_seconds = time.perf_counter() - t0
    ex.stats.peak_l1_bytes = ex.ledger.peak
    if ex.adjoint is None:
        raise ExecutionError("execution finished without producing an adjoint")
    return ex.adjoint, ex.stats


def run_forward_sweep(
    plan: MultistagePlan,
    ops: OperatorPair,
    backend: Level2Backend,
    initial_state: bytes,
) -> tuple[list[int], bytes]:
    """Store every boundary state of a (non-fallback) plan to the backend.

    Returns the stored boundary keys and the final state; the caller derives
    the adjoint seed from the latter.
    """
    if plan.fallback:
        raise ValueError("fallback plans have no Level-2 phase; use execute()")
    ex = _Execution(ops)
    final_state = _multistage_forward(ex, plan, backend, bytes(initial_state))
    return list(plan.boundaries), final_state


def run_backward_sweep(
    plan: MultistagePlan,
    ops: OperatorPair,
    backend: Level2Backend,
    adjoint_seed: bytes,
) -> bytes:
    """Reverse all intervals of a (non-fallback) plan whose boundary states
    are already in the backend. MissingKey propagates if a boundary was
    never stored."""
    if plan.fallback:
        raise ValueError("fallback plans have no Level-2 phase; use execute()")
    ex = _Execution(ops)
    ex.seed_with(adjoint_seed)
    _multistage_backward(ex, plan, backend)
    assert ex.adjoint is not None
    return ex.adjoint


def calibrate(
    ops: OperatorPair,
    backend: Level2Backend,
    trial_steps: int,
    initial_state: bytes,
) -> tuple[float, float, float]:
    """Measure median per-operation times (t_a, t_b, t_t).

    Runs trial_steps warm forward steps, trial_steps backward steps, and
    trial_steps store round trips on the given backend. Store keys
    0..trial_steps-1 are (over)written as a side effect.
    """
    if trial_steps < 3:
        raise ValueError(f"trial_steps must be >= 3, got {trial_steps}")
    if len(initial_state) != ops.state_size:
        raise SizeMismatch("initial state does not match state_size")

    state = bytes(initial_state)
    state = ops.forward_step(0, state)  # warm-up
    states = []
    forward_times = []
    for i in range(trial_steps):
        step = i % ops.n_steps
        states.append((step, state))
        t0 = time.perf_counter()
        state = ops.forward_step(step, state)
        forward_times.append(time.perf_counter() - t0)

    adjoint = ops.seed_for(state)
    backward_times = []
    for step, saved in reversed(states):
        t0 = time.perf_counter()
        adjoint = ops.backward_step(step, saved, adjoint)
        backward_times.append(time.perf_counter() - t0)

    transfer_times = []
    for i in range(trial_steps):
        payload = CheckpointPayload(i, state)
        t0 = time.perf_counter()
        backend.wait(backend.begin_store(i, payload))
        transfer_times.append(time.perf_counter() - t0)

    return (
        statistics.median(forward_times),
        statistics.median(backward_times),
        statistics.median(transfer_times),
    )

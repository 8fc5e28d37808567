"""Asynchronous two-level checkpointing for reverse-mode computation.

Generate minimal-recomputation reversal schedules, execute them against an
operator pair with background Level-2 stores and prefetches, predict their
timing with an exact analytic model, and benchmark the whole stack on a
hand-rolled LSTM.
"""

from .errors import (
    CheckpointError,
    ChecksumMismatch,
    ExecutionError,
    InfeasibleSchedule,
    MissingKey,
    SizeMismatch,
    SlotOutOfRange,
    SlotUnwritten,
    StorageFull,
)
from .perfmodel import (
    PerfParams,
    emit_curves,
    interval_length,
    t_async,
    t_infinity,
    t_revolve,
)
from .runtime import (
    ExecutionStats,
    FullStorage,
    Multistage,
    OperatorPair,
    Revolve,
    calibrate,
    execute,
    run_backward_sweep,
    run_forward_sweep,
)
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
    ValidityReport,
    forward_cost,
    plan_multistage,
    recompute_factor,
    revolve_schedule,
    validate_schedule,
)
from .simulator import TimelineEvent, simulate
from .storage import (
    CheckpointPayload,
    FileBackend,
    Level1Pool,
    Level2Backend,
    SimulatedBackend,
    TransferTicket,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Advance",
    "CheckpointError",
    "CheckpointPayload",
    "ChecksumMismatch",
    "Done",
    "ExecutionError",
    "ExecutionStats",
    "FileBackend",
    "FullStorage",
    "InfeasibleSchedule",
    "Level1Pool",
    "Level2Backend",
    "LoadCheckpoint",
    "MissingKey",
    "Multistage",
    "MultistagePlan",
    "OperatorPair",
    "PerfParams",
    "Revolve",
    "Reverse",
    "SaveCheckpoint",
    "ScheduleParams",
    "SimulatedBackend",
    "SizeMismatch",
    "SlotOutOfRange",
    "SlotUnwritten",
    "StorageFull",
    "TapeForward",
    "TimelineEvent",
    "TransferTicket",
    "ValidityReport",
    "calibrate",
    "emit_curves",
    "execute",
    "forward_cost",
    "interval_length",
    "plan_multistage",
    "recompute_factor",
    "revolve_schedule",
    "run_backward_sweep",
    "run_forward_sweep",
    "simulate",
    "t_async",
    "t_infinity",
    "t_revolve",
    "validate_schedule",
]

"""Exception hierarchy shared by all modules."""


class CheckpointError(Exception):
    """Base class for every error raised by this package."""


class InfeasibleSchedule(CheckpointError):
    """Reversal cannot be scheduled with the given step count and slots."""


class SizeMismatch(CheckpointError):
    """Payload length does not match the configured state size."""


class SlotOutOfRange(CheckpointError):
    """Slot index outside the pool capacity."""


class SlotUnwritten(CheckpointError):
    """A slot was read before anything was written to it."""


class MissingKey(CheckpointError):
    """Fetch requested for a key that was never stored."""


class ChecksumMismatch(CheckpointError):
    """Stored bytes fail integrity verification (corruption, truncation)."""


class StorageFull(CheckpointError):
    """The backing store has no space left."""


class ExecutionError(CheckpointError):
    """A schedule action could not be applied to the runtime state."""

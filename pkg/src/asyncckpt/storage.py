"""Two-level storage: a Level-1 slot pool plus pluggable Level-2 backends
with asynchronous store and fetch.

Backends run a single background worker thread fed by a FIFO request queue,
so a fetch enqueued after a store of the same key always sees the stored
bytes. Callers keep at most one store and one prefetch outstanding; tickets
expose completion via wait (blocking, idempotent) or poll.

Checkpoint file format (little-endian, fixed width):

    magic   4 bytes  b"CKPT"
    version u16      currently 1
    step    u64
    length  u64      payload byte count
    payload length bytes
    crc     u32      CRC32C over header + payload

Corruption or truncation surfaces as ChecksumMismatch, never as bytes.
"""

from __future__ import annotations

import os
import queue
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import (
    ChecksumMismatch,
    MissingKey,
    SizeMismatch,
    SlotOutOfRange,
    SlotUnwritten,
    StorageFull,
)

MAGIC = b"CKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<HQQ")  # version, step, payload length
HEADER_BYTES = len(MAGIC) + _HEADER.size  # 22
TRAILER_BYTES = 4
FILE_OVERHEAD = HEADER_BYTES + TRAILER_BYTES


def _crc32c_table() -> list[int]:
    poly = 0x82F63B78
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _crc32c_table()


def crc32c(data: bytes, crc: int = 0) -> int:
    """CRC32C (Castagnoli) checksum; crc32c(b"123456789") == 0xE3069283."""
    crc ^= 0xFFFFFFFF
    for byte in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFFFFFF


@dataclass(frozen=True)
class CheckpointPayload:
    """Opaque byte image of one program state."""

    step: int
    data: bytes

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")


def encode_checkpoint(payload: CheckpointPayload) -> bytes:
    header = MAGIC + _HEADER.pack(FORMAT_VERSION, payload.step, len(payload.data))
    body = header + payload.data
    return body + struct.pack("<I", crc32c(body))


def decode_checkpoint(blob: bytes) -> CheckpointPayload:
    if len(blob) < FILE_OVERHEAD:
        raise ChecksumMismatch(f"checkpoint truncated: {len(blob)} bytes")
    if blob[: len(MAGIC)] != MAGIC:
        raise ChecksumMismatch("bad magic bytes")
    version, step, length = _HEADER.unpack(blob[len(MAGIC) : HEADER_BYTES])
    if version != FORMAT_VERSION:
        raise ChecksumMismatch(f"unsupported format version {version}")
    if len(blob) != FILE_OVERHEAD + length:
        raise ChecksumMismatch(
            f"length field says {length}, file holds {len(blob) - FILE_OVERHEAD}"
        )
    body = blob[: HEADER_BYTES + length]
    (expected,) = struct.unpack_from("<I", blob, HEADER_BYTES + length)
    actual = crc32c(body)
    if actual != expected:
        raise ChecksumMismatch(f"crc mismatch: {actual:#x} != {expected:#x}")
    return CheckpointPayload(step=step, data=blob[HEADER_BYTES : HEADER_BYTES + length])


def write_checkpoint_file(path: Path, payload: CheckpointPayload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(encode_checkpoint(payload))
        os.replace(tmp, path)
    except OSError as exc:
        if exc.errno == 28:  # ENOSPC
            raise StorageFull(str(exc)) from exc
        raise


def read_checkpoint_file(path: Path, key: Optional[int] = None) -> CheckpointPayload:
    if not path.exists():
        raise MissingKey(str(path))
    payload = decode_checkpoint(path.read_bytes())
    if key is not None and payload.step != key:
        raise ChecksumMismatch(f"file holds step {payload.step}, expected {key}")
    return payload


class Level1Pool:
    """Fixed set of same-sized checkpoint slots confined to the compute
    thread. Reading an unwritten slot is an error; occupancy and its peak
    are tracked for memory accounting."""

    def __init__(self, capacity: int, slot_size: int) -> None:
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        if slot_size <= 0:
            raise ValueError(f"slot_size must be positive, got {slot_size}")
        self.capacity = capacity
        self.slot_size = slot_size
        self._slots: dict[int, CheckpointPayload] = {}
        self._peak = 0

    def save(self, slot: int, payload: CheckpointPayload) -> None:
        if not 0 <= slot < self.capacity:
            raise SlotOutOfRange(f"slot {slot} outside capacity {self.capacity}")
        if len(payload.data) != self.slot_size:
            raise SizeMismatch(
                f"payload is {len(payload.data)} bytes, slots hold {self.slot_size}"
            )
        self._slots[slot] = payload
        self._peak = max(self._peak, len(self._slots))

    def load(self, slot: int) -> CheckpointPayload:
        if not 0 <= slot < self.capacity:
            raise SlotOutOfRange(f"slot {slot} outside capacity {self.capacity}")
        if slot not in self._slots:
            raise SlotUnwritten(f"slot {slot} read before write")
        return self._slots[slot]

    def free(self, slot: int) -> None:
        self._slots.pop(slot, None)

    def clear(self) -> None:
        self._slots.clear()

    @property
    def occupancy(self) -> int:
        return len(self._slots)

    @property
    def peak_occupancy(self) -> int:
        return self._peak

    @property
    def occupied_bytes(self) -> int:
        return len(self._slots) * self.slot_size


class TransferTicket:
    """Handle to one in-flight store or fetch. Completed exactly once by the
    worker; wait is idempotent and returns immediately once completed."""

    _ids = 0
    _ids_lock = threading.Lock()

    def __init__(self, kind: str, key: int) -> None:
        with TransferTicket._ids_lock:
            TransferTicket._ids += 1
            self.id = TransferTicket._ids
        self.kind = kind
        self.key = key
        self._event = threading.Event()
        self._result: Optional[CheckpointPayload] = None
        self._error: Optional[BaseException] = None

    def _complete(self, result: Optional[CheckpointPayload], error=None) -> None:
        self._result = result
        self._error = error
        self._event.set()

    @property
    def done(self) -> bool:
        return self._event.is_set()


class Level2Backend:
    """Asynchronous large-but-slow storage stage keyed by step index.

    One worker thread serves requests in FIFO order. Subclasses implement
    the synchronous _store/_fetch/_contains primitives.
    """

    def __init__(self) -> None:
        self._queue: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    # -- subclass interface -------------------------------------------------

    def _store(self, key: int, payload: CheckpointPayload) -> None:
        raise NotImplementedError

    def _fetch(self, key: int) -> CheckpointPayload:
        raise NotImplementedError

    def _contains(self, key: int) -> bool:
        raise NotImplementedError

    # -- public API ---------------------------------------------------------

    def begin_store(self, key: int, payload: CheckpointPayload) -> TransferTicket:
        ticket = TransferTicket("store", key)
        self._queue.put((ticket, payload))
        return ticket

    def begin_fetch(self, key: int) -> TransferTicket:
        ticket = TransferTicket("fetch", key)
        self._queue.put((ticket, None))
        return ticket

    def wait(self, ticket: TransferTicket) -> Optional[CheckpointPayload]:
        ticket._event.wait()
        if ticket._error is not None:
            raise ticket._error
        return ticket._result

    def poll(self, ticket: TransferTicket) -> bool:
        return ticket.done

    def contains(self, key: int) -> bool:
        return self._contains(key)

    def close(self) -> None:
        self._queue.put(None)
        self._worker.join()

    def __enter__(self) -> "Level2Backend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            ticket, payload = item
            try:
                if ticket.kind == "store":
                    self._store(ticket.key, payload)
                    ticket._complete(None)
                else:
                    ticket._complete(self._fetch(ticket.key))
            except BaseException as exc:  # surfaced at wait()
                ticket._complete(None, exc)


class SimulatedBackend(Level2Backend):
    """In-memory backend whose transfers take latency + size / bandwidth of
    real wall time (scaled by time_scale), exercising true asynchrony
    without slow hardware."""

    def __init__(
        self, bandwidth: float, latency: float, time_scale: float = 1.0
    ) -> None:
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if latency < 0:
            raise ValueError("latency must be >= 0")
        self.bandwidth = bandwidth
        self.latency = latency
        self.time_scale = time_scale
        self._data: dict[int, CheckpointPayload] = {}
        self._lock = threading.Lock()
        super().__init__()

    def transfer_seconds(self, nbytes: int) -> float:
        return (self.latency + nbytes / self.bandwidth) * self.time_scale

    def _store(self, key: int, payload: CheckpointPayload) -> None:
        time.sleep(self.transfer_seconds(len(payload.data)))
        with self._lock:
            self._data[key] = payload

    def _fetch(self, key: int) -> CheckpointPayload:
        with self._lock:
            if key not in self._data:
                raise MissingKey(f"key {key} never stored")
            payload = self._data[key]
        time.sleep(self.transfer_seconds(len(payload.data)))
        return payload

    def _contains(self, key: int) -> bool:
        with self._lock:
            return key in self._data


class FileBackend(Level2Backend):
    """One checkpoint file per key (ckpt_<step>.bin) under a scratch
    directory, in the bit-exact format above."""

    def __init__(self, directory: os.PathLike | str) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        super().__init__()

    def path_for(self, key: int) -> Path:
        return self.directory / f"ckpt_{key}.bin"

    def _store(self, key: int, payload: CheckpointPayload) -> None:
        write_checkpoint_file(self.path_for(key), payload)

    def _fetch(self, key: int) -> CheckpointPayload:
        return read_checkpoint_file(self.path_for(key), key=key)

    def _contains(self, key: int) -> bool:
        return self.path_for(key).exists()

"""Self-contained LSTM benchmark: a recurrent cell with hand-written
forward and backward steps, wired into the runtime as an operator pair.

One benchmark iteration is a single forward/backward pass of n recurrences
of one cell over a fixed input sequence, with a sum-of-squares loss of the
final hidden state against a fixed target. The backward step computes exact
reverse-mode derivatives of that loss with respect to the step state (h, c);
weight gradients are out of scope here, the state adjoint is what the
checkpointing strategies must reproduce bit for bit.

States and adjoints are serialized as h then c, little-endian float64, so
one state is 2 * d * 8 bytes.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .runtime import (
    ExecutionStats,
    FullStorage,
    Multistage,
    OperatorPair,
    Revolve,
    Strategy,
    execute,
)
from .storage import FileBackend, Level2Backend, SimulatedBackend

_F8 = np.dtype("<f8")


@dataclass
class LstmCell:
    """Cell weights plus the benchmark's input sequence and loss target.

    Weight matrices act on [h; x] (size 2d); gates are
    f, i, o = sigmoid(W [h;x] + b), g = tanh(W_c [h;x] + b_c),
    c' = f*c + i*g, h' = o * tanh(c').
    """

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    xs: np.ndarray  # (n, d) input sequence
    target: np.ndarray  # (d,) loss target for h_n

    @property
    def hidden_size(self) -> int:
        return self.b_f.shape[0]

    @property
    def n_steps(self) -> int:
        return self.xs.shape[0]

    @property
    def state_size(self) -> int:
        return 2 * self.hidden_size * 8


def random_cell(d: int, n: int, seed: int) -> LstmCell:
    """Reproducible cell: weights, inputs, and target uniform in [-0.1, 0.1]
    from a 64-bit seeded generator."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    return LstmCell(
        w_f=u(d, 2 * d),
        w_i=u(d, 2 * d),
        w_o=u(d, 2 * d),
        w_c=u(d, 2 * d),
        b_f=u(d),
        b_i=u(d),
        b_o=u(d),
        b_c=u(d),
        xs=u(n, d),
        target=u(d),
    )


def random_state(d: int, seed: int) -> bytes:
    rng = np.random.default_rng(seed)
    return pack_state(rng.uniform(-0.1, 0.1, d), rng.uniform(-0.1, 0.1, d))


def pack_state(h: np.ndarray, c: np.ndarray) -> bytes:
    return np.ascontiguousarray(np.concatenate([h, c]), dtype=_F8).tobytes()


def unpack_state(state: bytes, d: int) -> tuple[np.ndarray, np.ndarray]:
    flat = np.frombuffer(state, dtype=_F8)
    if flat.shape[0] != 2 * d:
        raise ValueError(f"state holds {flat.shape[0]} floats, expected {2 * d}")
    return flat[:d].copy(), flat[d:].copy()


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _gates(cell: LstmCell, h: np.ndarray, x: np.ndarray):
    z = np.concatenate([h, x])
    f = _sigmoid(cell.w_f @ z + cell.b_f)
    i = _sigmoid(cell.w_i @ z + cell.b_i)
    o = _sigmoid(cell.w_o @ z + cell.b_o)
    g = np.tanh(cell.w_c @ z + cell.b_c)
    return f, i, o, g


def lstm_forward_step(cell: LstmCell, step: int, state: bytes) -> bytes:
    d = cell.hidden_size
    h, c = unpack_state(state, d)
    f, i, o, g = _gates(cell, h, cell.xs[step])
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return pack_state(h_next, c_next)


def lstm_backward_step(cell: LstmCell, step: int, state: bytes, adjoint: bytes) -> bytes:
    """Adjoint of one step: gates are recomputed from the step's input state,
    so only (h_k, c_k) bytes are needed."""
    d = cell.hidden_size
    h, c = unpack_state(state, d)
    dh_next, dc_next = unpack_state(adjoint, d)
    f, i, o, g = _gates(cell, h, cell.xs[step])
    c_next = f * c + i * g
    t = np.tanh(c_next)

    do = dh_next * t
    dc = dc_next + dh_next * o * (1.0 - t * t)
    da_f = dc * c * f * (1.0 - f)
    da_i = dc * g * i * (1.0 - i)
    da_o = do * o * (1.0 - o)
    da_g = dc * i * (1.0 - g * g)

    dz = cell.w_f.T @ da_f + cell.w_i.T @ da_i + cell.w_o.T @ da_o + cell.w_c.T @ da_g
    dh = dz[:d]
    dc_k = dc * f
    return pack_state(dh, dc_k)


def loss(cell: LstmCell, final_state: bytes) -> float:
    h, _ = unpack_state(final_state, cell.hidden_size)
    diff = h - cell.target
    return float(diff @ diff)


def loss_gradient_seed(cell: LstmCell, final_state: bytes) -> bytes:
    h, _ = unpack_state(final_state, cell.hidden_size)
    return pack_state(2.0 * (h - cell.target), np.zeros(cell.hidden_size))


def operator_pair(cell: LstmCell) -> OperatorPair:
    return OperatorPair(
        forward_step=lambda k, s: lstm_forward_step(cell, k, s),
        backward_step=lambda k, s, a: lstm_backward_step(cell, k, s, a),
        state_size=cell.state_size,
        n_steps=cell.n_steps,
        adjoint_seed=lambda final: loss_gradient_seed(cell, final),
    )


@dataclass
class BenchReport:
    n: int
    strategy: str
    wall_seconds: float
    forward_evals: int
    recompute_factor_measured: float
    peak_l1_bytes: int
    stall_seconds: float
    gradient_checksum: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _strategy_label(strategy: Strategy) -> str:
    if isinstance(strategy, FullStorage):
        return "full"
    if isinstance(strategy, Revolve):
        return "revolve"
    if isinstance(strategy, Multistage):
        return "multistage"
    raise TypeError(f"unknown strategy {strategy!r}")


def make_backend(config: Optional[dict]) -> Optional[Level2Backend]:
    """Build a backend from a small config dict:
    {"kind": "sim", "bandwidth": ..., "latency": ...} or
    {"kind": "file", "dir": ...}; None means no backend."""
    if config is None:
        return None
    kind = config["kind"]
    if kind == "sim":
        return SimulatedBackend(
            bandwidth=config.get("bandwidth", 1e9),
            latency=config.get("latency", 0.0),
        )
    if kind == "file":
        directory = config.get("dir") or tempfile.mkdtemp(prefix="ckpt_")
        return FileBackend(directory)
    raise ValueError(f"unknown backend kind {kind!r}")


def bench(
    strategy: Strategy,
    n: int,
    d: int,
    s: int,
    backend_config: Optional[dict] = None,
    seed: int = 0,
    runs: int = 5,
) -> BenchReport:
    """One forward/backward iteration under a strategy, timed as the minimum
    over ``runs`` repetitions (counters are identical across runs)."""
    cell = random_cell(d, n, seed)
    ops = operator_pair(cell)
    state0 = random_state(d, seed + 1)
    backend = make_backend(backend_config)
    try:
        best: Optional[ExecutionStats] = None
        adjoint = b""
        for _ in range(max(1, runs)):
            adjoint, stats = execute(strategy, ops, state0, backend)
            if best is None or stats.wall_seconds < best.wall_seconds:
                best = stats
        assert best is not None
        return BenchReport(
            n=n,
            strategy=_strategy_label(strategy),
            wall_seconds=best.wall_seconds,
            forward_evals=best.forward_evals,
            recompute_factor_measured=best.forward_evals / n,
            peak_l1_bytes=best.peak_l1_bytes,
            stall_seconds=best.stall_seconds,
            gradient_checksum=hashlib.sha256(adjoint).hexdigest(),
        )
    finally:
        if backend is not None:
            backend.close()

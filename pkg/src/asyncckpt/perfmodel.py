"""Closed-form timing model for the three reversal strategies.

The model charges nothing for Level-2 transfers: they run in the background
and are sized (via the checkpointing interval) so they fit inside the compute
they overlap. Contention effects that break that assumption are measured by
the runtime and simulator modules instead.

All arithmetic is exact: float inputs become Fractions, and results are
rendered back to float only at the boundary. That lets the simulator totals
match these formulas bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .schedule import recompute_factor


@dataclass(frozen=True)
class PerfParams:
    """Model inputs: n steps, s Level-1 slots, per-step forward time t_a,
    per-step backward time t_b, and per-state Level-2 transfer time t_t
    (all seconds, strictly positive)."""

    n: int
    s: int
    t_a: float
    t_b: float
    t_t: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        for name in ("t_a", "t_b", "t_t"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def t_infinity(p: PerfParams) -> float:
    """Unconstrained forward/backward time: every state kept, no recompute."""
    return float(p.n * (Fraction(p.t_a) + Fraction(p.t_b)))


def t_revolve(p: PerfParams) -> float:
    """Single-level reversal time: n * recompute_factor(n, s) * t_a + n * t_b."""
    r = recompute_factor(p.n, p.s)
    return float(p.n * r * Fraction(p.t_a) + p.n * Fraction(p.t_b))


def interval_length(t_t: float, t_a: float) -> int:
    """Checkpointing interval: ceil(t_t / t_a), at least 1.

    Spacing stores this far apart means a transfer always finishes within
    the compute window of the interval it was issued in.
    """
    if t_t <= 0 or t_a <= 0:
        raise ValueError("t_t and t_a must be positive")
    return max(1, math.ceil(Fraction(t_t) / Fraction(t_a)))


def t_async(p: PerfParams) -> float:
    """Two-level reversal time: n * recompute_factor(I, s) * t_a + n * t_b
    with I = interval_length(t_t, t_a). Falls back to t_revolve when the run
    is too short to store even one checkpoint (I >= n)."""
    interval = interval_length(p.t_t, p.t_a)
    if interval >= p.n:
        return t_revolve(p)
    r = recompute_factor(interval, p.s)
    return float(p.n * r * Fraction(p.t_a) + p.n * Fraction(p.t_b))


def _sweep(n_max: int) -> list[int]:
    ns = []
    n = 1
    while n <= n_max:
        ns.append(n)
        n *= 2
    return ns


def emit_curves(s: int, intervals: Sequence[int], n_max: int) -> list[dict]:
    """Recompute-factor curves over a power-of-two sweep of n.

    Each row holds the single-level recompute factor at n and, for every
    interval I, the factor of reversing min(I, n) steps: constant once n
    passes I, and equal to the single-level column before that (fallback).
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    rows = []
    for n in _sweep(n_max):
        row = {"n": n, "revolve": recompute_factor(n, s)}
        for interval in intervals:
            row[f"async_I{interval}"] = recompute_factor(min(interval, n), s)
        rows.append(row)
    return rows


def curves_to_csv(rows: Iterable[dict]) -> str:
    """Render emit_curves output as CSV with 6 significant digits."""
    rows = list(rows)
    if not rows:
        return ""
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        cells = [str(row["n"])]
        cells.extend(f"{float(row[col]):.6g}" for col in columns[1:])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

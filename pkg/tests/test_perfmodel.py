from fractions import Fraction

import pytest

from asyncckpt.errors import InfeasibleSchedule
from asyncckpt.perfmodel import (
    PerfParams,
    curves_to_csv,
    emit_curves,
    interval_length,
    t_async,
    t_infinity,
    t_revolve,
)


def test_t_infinity_direct():
    assert t_infinity(PerfParams(10, 1, 1.0, 2.0, 1.0)) == 30.0
    assert t_infinity(PerfParams(1, 0, 0.5, 0.5, 1.0)) == 1.0
    assert t_infinity(PerfParams(1000, 1, 0.003, 0.006, 1.0)) == pytest.approx(9.0)


def test_t_revolve_no_recompute_with_enough_slots():
    assert t_revolve(PerfParams(10, 9, 1.0, 1.0, 1.0)) == 20.0


def test_t_revolve_frozen_forward_term():
    # cost(10, 3) = 19 from the exhaustive oracle
    assert t_revolve(PerfParams(10, 3, 1.0, 1.0, 1.0)) == 29.0


def test_t_revolve_at_least_t_infinity():
    for n in (1, 5, 17, 64):
        for s in (1, 2, 8):
            p = PerfParams(n, s, 0.7, 1.3, 2.0)
            assert t_revolve(p) >= t_infinity(p)


def test_t_revolve_infeasible():
    with pytest.raises(InfeasibleSchedule):
        t_revolve(PerfParams(10, 0, 1.0, 1.0, 1.0))


def test_interval_length():
    assert interval_length(4.0, 1.0) == 4
    assert interval_length(2.5, 1.0) == 3
    assert interval_length(0.3, 1.0) == 1
    assert interval_length(1e-9, 1.0) == 1


def test_t_async_flat_interval():
    # I = 64 and 100 slots: no recomputation inside intervals
    assert t_async(PerfParams(1024, 100, 1.0, 1.0, 64.0)) == 2048.0


def test_t_async_fallback_short_run():
    p = PerfParams(4, 3, 1.0, 1.0, 100.0)
    assert t_async(p) == t_revolve(p) == 8.0


def test_t_async_frozen_large_interval():
    # cost(1024, 100) = 1957 from the exhaustive oracle:
    # 2048 * 1957/1024 * 1.0 + 2048 * 1.0
    assert t_async(PerfParams(2048, 100, 1.0, 1.0, 1024.0)) == 3914.0 + 2048.0


def test_t_async_between_bounds():
    for n in (8, 32, 100, 256):
        for s in (2, 4, 16):
            for tt in (0.4, 1.0, 3.7, 40.0):
                p = PerfParams(n, s, 1.0, 0.8, tt)
                assert t_infinity(p) <= t_async(p) <= t_revolve(p)


def test_t_async_streaming_equals_t_infinity():
    # transfers faster than compute: every state streams, no recompute
    for n in (4, 64, 500):
        p = PerfParams(n, 3, 1.0, 2.0, 0.99)
        assert t_async(p) == t_infinity(p)


def test_t_async_per_step_constant_past_interval():
    times = {}
    for n in (32, 64, 128, 256):
        p = PerfParams(n, 4, 1.0, 1.0, 16.0)
        times[n] = Fraction(t_async(p)) / n
    assert len(set(times.values())) == 1


def test_params_validation():
    with pytest.raises(ValueError):
        PerfParams(0, 1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        PerfParams(4, -1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        PerfParams(4, 1, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        PerfParams(4, 1, 1.0, 1.0, -2.0)


def test_curves_flat_async_column():
    rows = emit_curves(100, [8], 64)
    for row in rows:
        if row["n"] >= 8:
            assert row["async_I8"] == 1
        else:
            assert row["async_I8"] == row["revolve"]


def test_curves_fallback_matches_revolve_below_interval():
    rows = emit_curves(100, [1024], 512)
    for row in rows:
        assert row["async_I1024"] == row["revolve"]


def test_curves_frozen_values():
    rows = emit_curves(4, [16], 64)
    last = rows[-1]
    assert last["n"] == 64
    assert last["async_I16"] == Fraction(33, 16)
    assert last["revolve"] == Fraction(229, 64)
    assert last["async_I16"] <= last["revolve"]


def test_curves_csv_format():
    rows = emit_curves(4, [8, 64], 16)
    text = curves_to_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "n,revolve,async_I8,async_I64"
    assert len(lines) == 1 + 5  # n = 1, 2, 4, 8, 16
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[1]) == 1.0
    # last row: n = 16, rendered with six significant digits
    row16 = dict(zip(lines[0].split(","), lines[-1].split(",")))
    assert row16["n"] == "16"
    assert row16["revolve"] == "2.0625"  # frozen: cost(16, 4) = 33
    assert row16["async_I8"] == "1.5"  # frozen: cost(8, 4) = 12
    assert row16["async_I64"] == row16["revolve"]  # fallback below I

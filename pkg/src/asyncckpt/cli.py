"""Command-line interface.

Subcommands emit JSON or CSV on stdout; diagnostics go to stderr. Exit code
0 on success, 2 on bad flags (argparse), 1 on any runtime error.

  schedule --n N --s S [--interval I]   reversal schedule as a JSON action
                                        array; with --interval, the full
                                        two-level plan (inner schedules use
                                        segment-relative step numbers)
  model    --s S --intervals 8,64      recompute-factor curves as CSV over a
           --n-max N [--ta --tb --tt]  power-of-two sweep of n
  simulate --strategy X --n --s         event timeline as JSON
           --ta --tb --tt [--interval]
  bench    --strategy X --n --d --s     one LSTM forward/backward iteration,
           [--interval] [--backend ...] reported as JSON

The benchmark scratch directory comes from --scratch-dir, else the
CKPT_SCRATCH_DIR environment variable, else a fresh temp directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import CheckpointError
from .lstm import bench
from .perfmodel import PerfParams, curves_to_csv, emit_curves, interval_length
from .runtime import FullStorage, Multistage, Revolve
from .schedule import (
    ScheduleParams,
    action_to_obj,
    plan_multistage,
    revolve_schedule,
)
from .simulator import simulate, timeline_to_json


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncckpt",
        description="Checkpointing schedules, performance model, simulator, "
        "and LSTM benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="dump a reversal schedule as JSON")
    p.add_argument("--n", type=int, required=True, help="forward steps")
    p.add_argument("--s", type=int, required=True, help="checkpoint slots")
    p.add_argument("--interval", type=int, help="two-level plan interval")

    p = sub.add_parser("model", help="emit recompute-factor curves as CSV")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--intervals", type=str, default=None,
                   help="comma-separated interval sizes (default: ceil(tt/ta))")
    p.add_argument("--n-max", type=int, required=True,
                   help="sweep n over powers of two up to this")
    p.add_argument("--ta", type=float, default=1.0)
    p.add_argument("--tb", type=float, default=1.0)
    p.add_argument("--tt", type=float, default=1.0)

    p = sub.add_parser("simulate", help="emit an event timeline as JSON")
    p.add_argument("--strategy", choices=["full", "revolve", "multistage"],
                   required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--ta", type=float, required=True)
    p.add_argument("--tb", type=float, required=True)
    p.add_argument("--tt", type=float, required=True)
    p.add_argument("--interval", type=int, help="override the calibrated interval")

    p = sub.add_parser("bench", help="run one LSTM iteration and report JSON")
    p.add_argument("--strategy", choices=["full", "revolve", "multistage"],
                   required=True)
    p.add_argument("--n", type=int, required=True, help="recurrences")
    p.add_argument("--d", type=int, default=32, help="hidden size")
    p.add_argument("--s", type=int, default=4, help="checkpoint slots")
    p.add_argument("--interval", type=int,
                   help="multistage interval (omit to calibrate)")
    p.add_argument("--backend", choices=["sim", "file"], default="sim")
    p.add_argument("--scratch-dir", type=str, default=None)
    p.add_argument("--latency", type=float, default=0.0,
                   help="sim backend latency, seconds")
    p.add_argument("--bandwidth", type=float, default=1e9,
                   help="sim backend bandwidth, bytes/second")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=5)
    return parser


def _strategy_from_args(args) -> FullStorage | Revolve | Multistage:
    if args.strategy == "full":
        return FullStorage()
    if args.strategy == "revolve":
        return Revolve(args.s)
    return Multistage(args.s, getattr(args, "interval", None))


def _cmd_schedule(args) -> None:
    if args.interval is None:
        actions = revolve_schedule(ScheduleParams(args.n, args.s))
        print(json.dumps([action_to_obj(a) for a in actions]))
        return
    plan = plan_multistage(args.n, args.s, args.interval)
    print(json.dumps({
        "n": plan.n,
        "s": plan.s,
        "interval": plan.interval,
        "fallback": plan.fallback,
        "boundaries": list(plan.boundaries),
        "intervals": [
            {
                "start": seg.start,
                "end": seg.end,
                "actions": [action_to_obj(a) for a in seg.actions],
            }
            for seg in plan.segments
        ],
    }))


def _cmd_model(args) -> None:
    if args.intervals:
        intervals = [int(tok) for tok in args.intervals.split(",") if tok]
    else:
        intervals = [interval_length(args.tt, args.ta)]
    rows = emit_curves(args.s, intervals, args.n_max)
    sys.stdout.write(curves_to_csv(rows))


def _cmd_simulate(args) -> None:
    strategy = _strategy_from_args(args)
    params = PerfParams(n=args.n, s=args.s, t_a=args.ta, t_b=args.tb, t_t=args.tt)
    events, total = simulate(strategy, params)
    print(timeline_to_json(strategy, events, total))


def _cmd_bench(args) -> None:
    strategy = _strategy_from_args(args)
    if args.backend == "file":
        scratch = args.scratch_dir or os.environ.get("CKPT_SCRATCH_DIR")
        config = {"kind": "file", "dir": scratch}
    else:
        config = {"kind": "sim", "latency": args.latency, "bandwidth": args.bandwidth}
    report = bench(
        strategy,
        n=args.n,
        d=args.d,
        s=args.s,
        backend_config=config,
        seed=args.seed,
        runs=args.runs,
    )
    print(report.to_json())


_COMMANDS = {
    "schedule": _cmd_schedule,
    "model": _cmd_model,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

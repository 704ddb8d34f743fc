"""Command line entry point.

    lqmhpe run      -- execute a Monte Carlo battery, emit records.csv/summary.json
    lqmhpe validate -- run the oracle/property checks, print pass/fail lines

Exit codes: 0 success, 1 configuration error, 2 validation failure.
The default output directory can be set with the LQMHPE_OUT environment
variable. CSV schema (one row per trial): seed, scheme, model, cost,
est_time_mean/min/max, nmpc_time_mean/min/max, est_iterations_total,
diverged, final_position_error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import BUILTIN_MODELS, ConfigError, load_model
from .monte_carlo import SCHEMES, run_battery

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqmhpe",
        description="Relaxed moving-horizon parameter estimation benchmarks "
        "for adaptive multirotor NMPC.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte Carlo battery")
    run_p.add_argument("--model", default="crazyflie",
                       help=f"builtin model name {BUILTIN_MODELS} or a TOML path")
    run_p.add_argument("--scheme", default="all",
                       help=f"one of {SCHEMES} or 'all'")
    run_p.add_argument("--trials", type=int, default=100)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--config", default=None,
                       help="model TOML file overriding --model")
    run_p.add_argument("--out", default=None,
                       help="output directory (default $LQMHPE_OUT or ./results)")
    run_p.add_argument("--horizon-n", type=int, default=25, help="NMPC horizon length")
    run_p.add_argument("--horizon-m", type=int, default=10, help="estimation horizon length")
    run_p.add_argument("--trace", action="store_true",
                       help="write per-step traces/<scheme>_<seed>.csv files")
    run_p.add_argument("--t-total", type=float, default=10.0)
    run_p.add_argument("--random-attitude", action="store_true",
                       help="sample the initial attitude uniformly on the sphere")

    val_p = sub.add_parser("validate", help="run oracle and property checks")
    val_p.add_argument("--quick", action="store_true", help="reduced sample counts")
    val_p.add_argument("--corrupt-input-matrix", action="store_true",
                       help=argparse.SUPPRESS)  # negative-control test hook
    return parser


def cmd_run(args) -> int:
    model = args.config if args.config else args.model
    try:
        load_model(model)  # fail fast with a diagnostic naming the input
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.scheme == "all":
        schemes = SCHEMES
    elif args.scheme in SCHEMES:
        schemes = (args.scheme,)
    else:
        print(f"config error: unknown scheme '{args.scheme}' (expected {SCHEMES} or 'all')",
              file=sys.stderr)
        return 1
    if args.trials < 1:
        print("config error: --trials must be at least 1", file=sys.stderr)
        return 1
    out_dir = args.out or os.environ.get("LQMHPE_OUT", "results")
    overrides = {
        "horizon_n": args.horizon_n,
        "horizon_m": args.horizon_m,
        "t_total": args.t_total,
        "random_attitude": args.random_attitude,
    }
    result = run_battery(
        model=model,
        schemes=schemes,
        n_trials=args.trials,
        base_seed=args.seed,
        jobs=args.jobs,
        out_dir=out_dir,
        trace=args.trace,
        overrides=overrides,
    )
    for scheme, entry in sorted(result.summary["schemes"].items()):
        avg_t = entry["average_solve_time"]
        avg_t = f"{avg_t:.3e} s" if avg_t is not None else "-"
        print(
            f"{scheme:8s} trials={entry['trials']:4d} "
            f"cost best/avg/worst = {entry['best_cost']:.3e} / "
            f"{entry['average_cost']:.3e} / {entry['worst_cost']:.3e}  "
            f"est solve avg = {avg_t}"
        )
    print(f"records: {result.records_path}")
    print(f"summary: {result.summary_path}")
    return 0


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(quick=args.quick, corrupt_input_matrix=args.corrupt_input_matrix)
    failures = 0
    for res in results:
        print(res.line())
        failures += 0 if res.passed else 1
    if failures:
        print(f"{failures} check(s) failed")
        return 2
    print("all checks passed")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if threadpool_limits is not None:
        with threadpool_limits(limits=1):
            return _dispatch(args)
    return _dispatch(args)  # pragma: no cover


def _dispatch(args) -> int:
    if args.command == "run":
        return cmd_run(args)
    if args.command == "validate":
        return cmd_validate(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

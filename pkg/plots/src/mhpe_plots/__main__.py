"""Script entry: python -m mhpe_plots --records ... --traces ... --out ..."""

import argparse
import sys

from .figures import PlotJob, run_job


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhpe_plots",
        description="Render benchmark figures from records.csv and trace files.",
    )
    parser.add_argument("--records", default=None, help="path to records.csv")
    parser.add_argument("--traces", default=None, help="directory of per-trial trace CSVs")
    parser.add_argument("--out", default="figures", help="output image directory")
    parser.add_argument(
        "--figures",
        default=None,
        help="comma-separated subset of violin,position_error,trace_panels "
        "(default: whatever the given inputs support)",
    )
    parser.add_argument("--log-scale", action="store_true",
                        help="log-scale the position-error axis")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    args = parser.parse_args(argv)

    if args.figures:
        figures = tuple(f.strip() for f in args.figures.split(",") if f.strip())
    else:
        figures = tuple(
            f for f, ok in (
                ("violin", args.records is not None),
                ("position_error", args.traces is not None),
                ("trace_panels", args.traces is not None),
            ) if ok
        )
    if not figures:
        parser.error("nothing to plot: pass --records and/or --traces")

    job = PlotJob(records=args.records, traces=args.traces, out_dir=args.out,
                  figures=figures, log_scale=args.log_scale, fmt=args.format)
    try:
        written = run_job(job)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Figure builders: distribution violins and position-error overlays.

All functions are pure file-to-file transforms: identical inputs and renderer
settings give identical image bytes. Rows that cannot be plotted are counted
and reported, never silently dropped.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

REQUIRED_RECORD_COLUMNS = ("scheme", "model", "cost", "est_time_mean")
FIGURE_DPI = 120

plt.rcParams.update({
    "figure.dpi": FIGURE_DPI,
    "savefig.dpi": FIGURE_DPI,
    "font.size": 9,
    "svg.hashsalt": "mhpe-plots",
})


@dataclass
class PlotJob:
    """One batch of figures from a records file and optional traces directory."""

    records: str | None = None
    traces: str | None = None
    out_dir: str = "figures"
    figures: tuple = ("violin", "position_error", "trace_panels")
    log_scale: bool = False
    fmt: str = "png"


class MissingColumnError(ValueError):
    """A required CSV column is absent; the message names it."""


def load_records(path: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    for col in REQUIRED_RECORD_COLUMNS:
        if col not in df.columns:
            raise MissingColumnError(f"records file {path} lacks required column '{col}'")
    return df


def compute_cost_stats(df: pd.DataFrame) -> dict:
    """Per-scheme medians/means recomputed straight from the CSV rows."""
    stats = {}
    for scheme, group in df.groupby("scheme"):
        costs = group["cost"].astype(float)
        times = group["est_time_mean"].astype(float).dropna()
        stats[scheme] = {
            "median_cost": float(costs.median()),
            "mean_cost": float(costs.mean()),
            "median_solve_time": float(times.median()) if len(times) else None,
            "n": int(len(group)),
        }
    return stats


def _violin(ax, data, labels, ylabel):
    parts = ax.violinplot(data, showmedians=True, showextrema=True)
    for body in parts["bodies"]:
        body.set_alpha(0.6)
    ax.set_xticks(np.arange(1, len(labels) + 1))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)


def plot_violin(records_path: str, out_dir: str, fmt: str = "png") -> list:
    """Solve-time and trajectory-cost distributions per scheme.

    Returns the list of written files. The cost figure carries a zoomed right
    panel focused on the distribution means; the solve-time figure is skipped
    (with a warning) when no scheme recorded estimator times.
    """
    df = load_records(records_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for model, sub in df.groupby("model"):
        schemes = sorted(sub["scheme"].unique())
        costs = [sub.loc[sub["scheme"] == s, "cost"].astype(float).to_numpy() for s in schemes]

        fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
        _violin(axes[0], costs, schemes, "trajectory cost")
        axes[0].set_title(f"{model}: trajectory cost")
        _violin(axes[1], costs, schemes, "trajectory cost")
        zoom = 1.2 * max(float(np.mean(c)) for c in costs)
        axes[1].set_ylim(0.0, zoom)
        axes[1].set_title("zoom on distribution means")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{model}_costs.{fmt}")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

        timed = [
            (s, sub.loc[sub["scheme"] == s, "est_time_mean"].astype(float).dropna().to_numpy())
            for s in schemes
        ]
        timed = [(s, v) for s, v in timed if v.size]
        if not timed:
            warnings.warn(f"{model}: no estimator solve times recorded "
                          "(scheme 'none' has no estimator); skipping time figure")
            continue
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        _violin(ax, [v for _, v in timed], [s for s, _ in timed], "estimator solve time [s]")
        ax.set_yscale("log")
        ax.set_title(f"{model}: estimator solve times")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{model}_solve_times.{fmt}")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def compute_position_error(trace: pd.DataFrame) -> np.ndarray:
    """Position error norm recomputed from the raw position columns."""
    for col in ("x0", "x1", "x2"):
        if col not in trace.columns:
            raise MissingColumnError(f"trace lacks required column '{col}'")
    return np.sqrt(
        trace["x0"].astype(float) ** 2
        + trace["x1"].astype(float) ** 2
        + trace["x2"].astype(float) ** 2
    ).to_numpy()


def plot_position_error(traces_dir: str, out_dir: str, log_scale: bool = False,
                        fmt: str = "png") -> str:
    """Overlaid position-error-norm curves, one per trace file."""
    files = sorted(Path(traces_dir).glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no trace files found in {traces_dir}")
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    truncated = 0
    for path in files:
        trace = pd.read_csv(path)
        err = compute_position_error(trace)
        t = trace["t"].astype(float).to_numpy()
        bad = ~np.isfinite(err)
        if bad.any():
            cut = int(np.argmax(bad))
            warnings.warn(f"{path.name}: non-finite position at row {cut}; curve truncated")
            t, err = t[:cut], err[:cut]
            truncated += 1
        ax.plot(t, err, linewidth=0.8, alpha=0.75)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("position error norm [m]")
    if log_scale:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.set_title(f"position error norms ({len(files)} trials"
                 + (f", {truncated} truncated)" if truncated else ")"))
    fig.tight_layout()
    out_path = os.path.join(out_dir, f"position_errors.{fmt}")
    fig.savefig(out_path)
    plt.close(fig)
    print(f"position_error: {len(files)} curves, {truncated} truncated")
    return out_path


def plot_trace_panels(traces_dir: str, out_dir: str, limit: int = 4,
                      fmt: str = "png") -> list:
    """Per-trial panels: inputs, position, attitude, linear/angular velocity."""
    files = sorted(Path(traces_dir).glob("*.csv"))[:limit]
    if not files:
        raise FileNotFoundError(f"no trace files found in {traces_dir}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    blocks = [
        (["u0", "u1", "u2", "u3"], "inputs [N]"),
        (["x0", "x1", "x2"], "position [m]"),
        (["x3", "x4", "x5", "x6"], "attitude quaternion"),
        (["x7", "x8", "x9"], "linear velocity [m/s]"),
        (["x10", "x11", "x12"], "angular velocity [rad/s]"),
    ]
    for path in files:
        trace = pd.read_csv(path)
        t = trace["t"].astype(float)
        fig, axes = plt.subplots(len(blocks), 1, figsize=(6.4, 9.0), sharex=True)
        for ax, (cols, label) in zip(axes, blocks):
            for col in cols:
                ax.plot(t, trace[col].astype(float), linewidth=0.8)
            ax.set_ylabel(label, fontsize=7)
            ax.grid(True, alpha=0.3)
        axes[-1].set_xlabel("time [s]")
        fig.suptitle(path.stem)
        fig.tight_layout()
        out_path = os.path.join(out_dir, f"trace_{path.stem}.{fmt}")
        fig.savefig(out_path)
        plt.close(fig)
        written.append(out_path)
    return written


def run_job(job: PlotJob) -> list:
    """Render every requested figure; returns the list of written files."""
    written = []
    if "violin" in job.figures:
        if not job.records:
            raise ValueError("violin figures need --records")
        written += plot_violin(job.records, job.out_dir, job.fmt)
    if "position_error" in job.figures:
        if not job.traces:
            raise ValueError("position_error figures need --traces")
        written.append(plot_position_error(job.traces, job.out_dir, job.log_scale, job.fmt))
    if "trace_panels" in job.figures:
        if not job.traces:
            raise ValueError("trace_panels figures need --traces")
        written += plot_trace_panels(job.traces, job.out_dir, fmt=job.fmt)
    return written

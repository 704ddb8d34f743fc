"""Offline figure generation from benchmark records and traces.

Consumes only the documented file formats emitted by the benchmark CLI
(records.csv, summary.json, traces/*.csv); deliberately shares no code with
the simulation/estimation package, so figures can be rebuilt from archived
results alone.
"""

from .figures import (
    PlotJob,
    compute_cost_stats,
    compute_position_error,
    plot_position_error,
    plot_trace_panels,
    plot_violin,
    run_job,
)

__all__ = [
    "PlotJob",
    "compute_cost_stats",
    "compute_position_error",
    "plot_position_error",
    "plot_trace_panels",
    "plot_violin",
    "run_job",
]

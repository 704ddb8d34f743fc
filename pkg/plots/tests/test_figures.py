"""Figure-pipeline checks against synthetic records and traces."""

import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from mhpe_plots import (
    PlotJob,
    compute_cost_stats,
    compute_position_error,
    plot_position_error,
    plot_trace_panels,
    plot_violin,
    run_job,
)
from mhpe_plots.figures import MissingColumnError, load_records

RNG = np.random.default_rng(3)


def make_records(path: Path, schemes=("lq_mhpe", "nmhpe", "none"), n=40) -> pd.DataFrame:
    rows = []
    for scheme in schemes:
        scale = {"lq_mhpe": 1.0, "nmhpe": 2.0, "none": 3.0}.get(scheme, 1.0)
        for seed in range(n):
            rows.append({
                "seed": seed,
                "scheme": scheme,
                "model": "crazyflie",
                "cost": float(scale * (1e4 + 3e3 * RNG.random())),
                "est_time_mean": float("nan") if scheme == "none" else 1e-3 * scale,
                "est_time_min": "",
                "est_time_max": "",
                "nmpc_time_mean": 1e-2,
                "nmpc_time_min": "",
                "nmpc_time_max": "",
                "est_iterations_total": 10,
                "diverged": 0,
                "final_position_error": 0.2,
            })
    df = pd.DataFrame(rows)
    df.to_csv(path, index=False)
    return df


def make_traces(trace_dir: Path, n_traces=10, steps=60, with_nan=False):
    trace_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_traces):
        t = np.arange(steps) * 0.02
        decay = np.exp(-t / 0.2)
        pos = np.stack([(2.0 + i * 0.1) * decay, -1.5 * decay, 0.7 * decay], axis=1)
        data = {"t": t}
        for j in range(3):
            data[f"x{j}"] = pos[:, j]
        for j in range(3, 13):
            data[f"x{j}"] = np.full(steps, 1.0 if j == 3 else 0.0)
        for j in range(4):
            data[f"u{j}"] = np.full(steps, 0.066)
        data["pos_error"] = np.linalg.norm(pos, axis=1)
        data["estimate_kind"] = ["relaxed"] * steps
        df = pd.DataFrame(data)
        if with_nan and i == 0:
            df.loc[steps - 5 :, "x0"] = np.nan
        df.to_csv(trace_dir / f"lq_mhpe_{i}.csv", index=False)


def test_three_scheme_records_written_figures(tmp_path):
    make_records(tmp_path / "records.csv")
    written = plot_violin(str(tmp_path / "records.csv"), str(tmp_path / "figs"))
    names = {Path(w).name for w in written}
    assert names == {"crazyflie_costs.png", "crazyflie_solve_times.png"}
    for w in written:
        assert Path(w).stat().st_size > 5000


def test_single_scheme_none_skips_time_figure(tmp_path):
    make_records(tmp_path / "records.csv", schemes=("none",))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        written = plot_violin(str(tmp_path / "records.csv"), str(tmp_path / "figs"))
    assert {Path(w).name for w in written} == {"crazyflie_costs.png"}
    assert any("no estimator solve times" in str(w.message) for w in caught)


def test_missing_column_is_named(tmp_path):
    df = make_records(tmp_path / "records.csv")
    df.drop(columns=["cost"]).to_csv(tmp_path / "broken.csv", index=False)
    with pytest.raises(MissingColumnError, match="cost"):
        load_records(str(tmp_path / "broken.csv"))


def test_medians_match_csv_recomputation(tmp_path):
    df = make_records(tmp_path / "records.csv")
    stats = compute_cost_stats(load_records(str(tmp_path / "records.csv")))
    for scheme in ("lq_mhpe", "nmhpe", "none"):
        expect = df.loc[df["scheme"] == scheme, "cost"].median()
        assert stats[scheme]["median_cost"] == float(expect)
    assert stats["none"]["median_solve_time"] is None


def test_position_error_overlay(tmp_path):
    make_traces(tmp_path / "traces", n_traces=10)
    out = plot_position_error(str(tmp_path / "traces"), str(tmp_path / "figs"))
    assert Path(out).exists()
    # every synthetic curve decays below threshold by the end
    for f in (tmp_path / "traces").glob("*.csv"):
        err = compute_position_error(pd.read_csv(f))
        assert err[-1] < 0.1


def test_position_error_norm_matches_raw_columns(tmp_path):
    make_traces(tmp_path / "traces", n_traces=3)
    for f in (tmp_path / "traces").glob("*.csv"):
        trace = pd.read_csv(f)
        recomputed = compute_position_error(trace)
        assert np.abs(recomputed - trace["pos_error"].to_numpy()).max() < 1e-12


def test_nan_trace_truncated_with_warning(tmp_path):
    make_traces(tmp_path / "traces", n_traces=2, with_nan=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plot_position_error(str(tmp_path / "traces"), str(tmp_path / "figs"))
    assert any("truncated" in str(w.message) for w in caught)


def test_empty_trace_dir_errors(tmp_path):
    (tmp_path / "traces").mkdir()
    with pytest.raises(FileNotFoundError):
        plot_position_error(str(tmp_path / "traces"), str(tmp_path / "figs"))


def test_trace_panels(tmp_path):
    make_traces(tmp_path / "traces", n_traces=3)
    written = plot_trace_panels(str(tmp_path / "traces"), str(tmp_path / "figs"), limit=2)
    assert len(written) == 2


def test_outputs_deterministic(tmp_path):
    make_records(tmp_path / "records.csv")
    a = plot_violin(str(tmp_path / "records.csv"), str(tmp_path / "a"))
    b = plot_violin(str(tmp_path / "records.csv"), str(tmp_path / "b"))
    for fa, fb in zip(a, b):
        assert Path(fa).read_bytes() == Path(fb).read_bytes()


def test_run_job_and_cli(tmp_path):
    make_records(tmp_path / "records.csv")
    make_traces(tmp_path / "traces")
    job = PlotJob(records=str(tmp_path / "records.csv"), traces=str(tmp_path / "traces"),
                  out_dir=str(tmp_path / "figs"))
    written = run_job(job)
    assert len(written) >= 4
    proc = subprocess.run(
        [sys.executable, "-m", "mhpe_plots",
         "--records", str(tmp_path / "records.csv"),
         "--traces", str(tmp_path / "traces"),
         "--out", str(tmp_path / "cli_figs")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cli_figs" / "position_errors.png").exists()


def test_cli_errors_on_missing_inputs(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mhpe_plots", "--records", str(tmp_path / "nope.csv")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert "nope.csv" in proc.stderr or "No such file" in proc.stderr


def test_secondary_acceptance_hundred_trial_set(tmp_path, capsys):
    """[SECONDARY] 100-trial records/traces set: violin + position-error
    figures render, and recomputed medians/norms match CSV-derived values
    exactly."""
    df = make_records(tmp_path / "records.csv", n=100)
    make_traces(tmp_path / "traces", n_traces=20, steps=100)
    written = run_job(PlotJob(records=str(tmp_path / "records.csv"),
                              traces=str(tmp_path / "traces"),
                              out_dir=str(tmp_path / "figs"),
                              figures=("violin", "position_error")))
    names = {Path(w).name for w in written}
    assert "crazyflie_costs.png" in names
    assert "crazyflie_solve_times.png" in names
    assert "position_errors.png" in names

    stats = compute_cost_stats(load_records(str(tmp_path / "records.csv")))
    medians_ok = True
    for scheme in ("lq_mhpe", "nmhpe", "none"):
        expect = float(df.loc[df["scheme"] == scheme, "cost"].median())
        medians_ok &= stats[scheme]["median_cost"] == expect
    norms_ok = True
    for f in (tmp_path / "traces").glob("*.csv"):
        trace = pd.read_csv(f)
        norms_ok &= bool(
            np.array_equal(compute_position_error(trace),
                           np.sqrt(trace.x0**2 + trace.x1**2 + trace.x2**2).to_numpy())
        )
    passed = medians_ok and norms_ok
    print(f"[{'PASS' if passed else 'FAIL'}] secondary-figures: "
          f"violin + position-error rendered from a 100-trial set; "
          f"medians exact={medians_ok}, norms exact={norms_ok}")
    assert passed

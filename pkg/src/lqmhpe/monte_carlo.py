"""Closed-loop Monte Carlo trials and experiment batteries.

Each trial draws a random true parameter vector, a random initial state and a
per-step uniform disturbance sequence, then runs the estimate -> plan ->
apply -> simulate loop for the full episode. All randomness is drawn up front
from the trial seed, so schemes compared under the same seed see identical
worlds (common random numbers) and every record is reproducible bit-for-bit.

Batteries parallelize across a worker pool and emit `records.csv`,
`summary.json`, and optional per-step `traces/<seed>.csv` files.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attitude import random_unit_quaternion
from .config import ModelConfig, load_model
from .dynamics import NX, NominalParams, State, add_disturbance, rk4_step
from .mhpe import (
    HorizonWindow,
    LqMhpe,
    NonlinearMhpe,
    nominal_estimator_state,
    relaxed_estimator_state,
)
from .nmpc import NmpcConfig, NmpcPlanner, ParameterEstimate, apply_first

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

SCHEMES = ("lq_mhpe", "nmhpe", "none")

# realized-cost channels carrying process noise (position and both velocities)
NOISE_ROWS = np.r_[0:3, 7:13]

CSV_COLUMNS = [
    "seed",
    "scheme",
    "model",
    "cost",
    "est_time_mean",
    "est_time_min",
    "est_time_max",
    "nmpc_time_mean",
    "nmpc_time_min",
    "nmpc_time_max",
    "est_iterations_total",
    "diverged",
    "final_position_error",
]

TIMING_COLUMNS = [c for c in CSV_COLUMNS if "time" in c]


@dataclass
class TrialConfig:
    """One closed-loop episode; defaults follow the simulation-table values."""

    model: str = "crazyflie"
    scheme: str = "lq_mhpe"
    seed: int = 0
    t_total: float = 10.0
    dt: float = 0.02
    horizon_n: int = 25
    horizon_m: int = 10
    bound_factors: tuple = (0.5, 1.5)
    noise_bound: float = 2.5  # continuous-time disturbance rate bound
    slack_weight: float = 1e6
    random_attitude: bool = False
    divergence_ceiling: float = 1e8
    # planner accuracy knobs for batch runs (exact-solve defaults are slower)
    nmpc_tol_stationarity: float = 3e-3
    nmpc_max_sqp_iter: int = 5
    nmpc_qp_tol: float = 1e-6
    nmpc_qp_max_iter: int = 1000
    nmhpe_max_iter: int = 15
    trace: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        steps = self.t_total / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("dt must divide t_total")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_total / self.dt))


@dataclass
class TrialRecord:
    seed: int
    scheme: str
    model: str
    cost: float
    est_times: list
    nmpc_times: list
    est_iterations_total: int
    diverged: bool
    final_position_error: float
    trace_rows: "list | None" = None

    def csv_row(self) -> dict:
        def stats(values):
            if not values:
                return ("", "", "")
            return (
                repr(float(np.mean(values))),
                repr(float(np.min(values))),
                repr(float(np.max(values))),
            )

        est = stats(self.est_times)
        nmpc = stats(self.nmpc_times)
        return {
            "seed": self.seed,
            "scheme": self.scheme,
            "model": self.model,
            "cost": repr(float(self.cost)),
            "est_time_mean": est[0],
            "est_time_min": est[1],
            "est_time_max": est[2],
            "nmpc_time_mean": nmpc[0],
            "nmpc_time_min": nmpc[1],
            "nmpc_time_max": nmpc[2],
            "est_iterations_total": self.est_iterations_total,
            "diverged": int(self.diverged),
            "final_position_error": repr(float(self.final_position_error)),
        }


def draw_trial_randomness(cfg: TrialConfig, model: ModelConfig):
    """All random inputs of a trial, drawn once from the seed.

    Returns (true parameter vector, initial state, disturbance rates (T, 10)).
    Schemes never consume randomness, so sharing a seed across schemes pairs
    the trials exactly.
    """
    rng = np.random.default_rng(cfg.seed)
    bounds = model.bounds
    theta0 = model.spec.params.vector()
    lo = np.minimum(cfg.bound_factors[0] * theta0, cfg.bound_factors[1] * theta0)
    hi = np.maximum(cfg.bound_factors[0] * theta0, cfg.bound_factors[1] * theta0)
    theta_true = rng.uniform(lo, hi)

    pos = rng.uniform(-bounds.position_bound, bounds.position_bound, 3)
    quat = random_unit_quaternion(rng) if cfg.random_attitude else np.array([1.0, 0, 0, 0])
    vel = rng.uniform(-bounds.velocity_bound, bounds.velocity_bound, 3)
    ang = rng.uniform(-bounds.angular_velocity_bound, bounds.angular_velocity_bound, 3)
    x0 = State(pos, quat, vel, ang)

    rates = rng.uniform(-cfg.noise_bound, cfg.noise_bound, (cfg.n_steps, NOISE_ROWS.size))
    return theta_true, x0, rates


def run_trial(cfg: TrialConfig, model: ModelConfig | None = None) -> TrialRecord:
    """Simulate one trial; deterministic given the config (seed included)."""
    model = model or load_model(cfg.model)
    spec = model.spec
    theta_true, x, rates = draw_trial_randomness(cfg, model)
    true_params = NominalParams.from_vector(theta_true)

    nmpc_cfg = NmpcConfig(
        horizon=cfg.horizon_n,
        dt=cfg.dt,
        u_max=spec.u_max,
        n_rotors=spec.params.n_rotors,
        tol_stationarity=cfg.nmpc_tol_stationarity,
        max_sqp_iter=cfg.nmpc_max_sqp_iter,
        qp_tol=cfg.nmpc_qp_tol,
        qp_max_iter=cfg.nmpc_qp_max_iter,
        verify_converged=False,
        gravity=spec.gravity,
    )
    planner = NmpcPlanner(nmpc_cfg)

    lo, hi = cfg.bound_factors
    estimator = None
    if cfg.scheme == "lq_mhpe":
        estimator = LqMhpe(relaxed_estimator_state(spec, lo, hi, slack_weight=cfg.slack_weight))
        current = ParameterEstimate("relaxed", estimator.est.prev.copy())
    elif cfg.scheme == "nmhpe":
        estimator = NonlinearMhpe(
            nominal_estimator_state(spec, lo, hi, slack_weight=cfg.slack_weight),
            max_iter=cfg.nmhpe_max_iter,
        )
        current = ParameterEstimate("nominal", estimator.est.prev.copy())
    else:
        current = ParameterEstimate.from_params(spec.params)

    window = HorizonWindow(cfg.horizon_m, cfg.dt, x)
    x_ref = nmpc_cfg.x_ref.vector()
    u_ref_metric = np.full(spec.params.n_rotors, spec.hover_thrust())  # fixed metric reference
    q_weights = nmpc_cfg.q_weights
    r_weight = nmpc_cfg.r_weight

    cost = 0.0
    est_times: list = []
    nmpc_times: list = []
    est_iters = 0
    diverged = False
    plan = None
    trace_rows: list | None = [] if cfg.trace else None

    for k in range(cfg.n_steps):
        if estimator is not None and window.is_full:
            res = estimator.estimate(window)
            est_times.append(res.solve_time)
            est_iters += res.iterations
            kind = "relaxed" if cfg.scheme == "lq_mhpe" else "nominal"
            current = ParameterEstimate(kind, res.estimate)

        plan = planner.plan(x, current, warm=plan)
        nmpc_times.append(plan.solve_time)
        u = apply_first(plan, spec.u_max)

        # realized stage cost with hemisphere-corrected quaternion error
        xv = x.vector()
        err = xv - x_ref
        if xv[3:7] @ x_ref[3:7] < 0.0:
            err[3:7] = xv[3:7] + x_ref[3:7]
        cost += float(err ** 2 @ q_weights) + r_weight * float(((u - u_ref_metric) ** 2).sum())

        if trace_rows is not None:
            trace_rows.append(
                [k * cfg.dt, *xv, *u, float(np.linalg.norm(x.pos)), current.kind]
            )

        if not np.all(np.isfinite(xv)) or np.abs(xv).max() > 1e6 or cost > cfg.divergence_ceiling:
            diverged = True
            break

        x_next = rk4_step(x, u, true_params, cfg.dt, gravity=spec.gravity)
        w = np.zeros(NX)
        w[NOISE_ROWS] = cfg.dt * rates[k]
        x_next = add_disturbance(x_next, w)
        window.push_step(x_next, u, w)
        x = x_next

    cost = float(min(cost, cfg.divergence_ceiling))
    final_err = float(np.linalg.norm(x.pos)) if np.all(np.isfinite(x.pos)) else float("inf")
    if not np.isfinite(final_err):
        final_err = 1e9
        diverged = True
    return TrialRecord(
        seed=cfg.seed,
        scheme=cfg.scheme,
        model=cfg.model,
        cost=cost,
        est_times=est_times,
        nmpc_times=nmpc_times,
        est_iterations_total=est_iters,
        diverged=diverged,
        final_position_error=final_err,
        trace_rows=trace_rows,
    )


def _worker(args):
    cfg_dict, out_dir = args
    if threadpool_limits is not None:
        with threadpool_limits(limits=1):
            rec = run_trial(TrialConfig(**cfg_dict))
    else:  # pragma: no cover
        rec = run_trial(TrialConfig(**cfg_dict))
    if rec.trace_rows is not None and out_dir is not None:
        _write_trace(rec, out_dir)
        rec.trace_rows = None
    return rec


def _write_trace(rec: TrialRecord, out_dir: str):
    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    path = os.path.join(trace_dir, f"{rec.scheme}_{rec.seed}.csv")
    header = (
        ["t"]
        + [f"x{i}" for i in range(NX)]
        + [f"u{i}" for i in range(4)]
        + ["pos_error", "estimate_kind"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rec.trace_rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )


@dataclass
class BatteryResult:
    records: list
    summary: dict
    records_path: "str | None" = None
    summary_path: "str | None" = None


def summarize(records: list, config_block: dict) -> dict:
    """Aggregates shaped like the benchmark table: best/average/worst solve
    times and trajectory costs per scheme."""
    summary: dict = {"config": config_block, "schemes": {}}
    for scheme in sorted({r.scheme for r in records}):
        subset = [r for r in records if r.scheme == scheme]
        costs = np.array([r.cost for r in subset])
        times = np.concatenate([r.est_times for r in subset if r.est_times]) if any(
            r.est_times for r in subset
        ) else np.zeros(0)
        entry = {
            "trials": len(subset),
            "diverged": int(sum(r.diverged for r in subset)),
            "best_cost": float(costs.min()),
            "average_cost": float(costs.mean()),
            "worst_cost": float(costs.max()),
            "converged_fraction": float(
                np.mean([r.final_position_error < 1.0 for r in subset])
            ),
        }
        if times.size:
            entry.update(
                best_solve_time=float(times.min()),
                average_solve_time=float(times.mean()),
                worst_solve_time=float(times.max()),
            )
        else:
            entry.update(best_solve_time=None, average_solve_time=None, worst_solve_time=None)
        summary["schemes"][scheme] = entry
    return summary


def write_records_csv(records: list, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rec in sorted(records, key=lambda r: (r.model, r.scheme, r.seed)):
            writer.writerow(rec.csv_row())


def run_battery(
    model: str = "crazyflie",
    schemes: tuple = SCHEMES,
    n_trials: int = 100,
    base_seed: int = 0,
    jobs: int = 1,
    out_dir: "str | None" = None,
    trace: bool = False,
    overrides: dict | None = None,
) -> BatteryResult:
    """Paired trials for every scheme; identical seeds share identical worlds."""
    overrides = overrides or {}
    configs = []
    for scheme in schemes:
        for i in range(n_trials):
            cfg = TrialConfig(model=model, scheme=scheme, seed=base_seed + i,
                              trace=trace, **overrides)
            configs.append(cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    args = [(cfg.__dict__.copy(), out_dir) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_worker, args, chunksize=1))
    else:
        records = [_worker(a) for a in args]
    # deterministic ordering regardless of executor scheduling
    records.sort(key=lambda r: (r.model, r.scheme, r.seed))

    config_block = {
        "model": model,
        "schemes": list(schemes),
        "trials": n_trials,
        "seed": base_seed,
        "jobs": jobs,
        "trace": trace,
        **{k: (list(v) if isinstance(v, tuple) else v) for k, v in overrides.items()},
    }
    summary = summarize(records, config_block)
    records_path = summary_path = None
    if out_dir is not None:
        records_path = os.path.join(out_dir, "records.csv")
        write_records_csv(records, records_path)
        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return BatteryResult(records, summary, records_path, summary_path)

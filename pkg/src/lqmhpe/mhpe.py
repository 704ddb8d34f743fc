"""Moving-horizon parameter estimators over a sliding window of transitions.

Two estimators share the window and the magnitude-reciprocal tuning rule:

* `NonlinearMhpe` fits the physical parameters against RK4-discretized
  dynamics constraints (an NLP solved by SQP), with slack disturbance
  variables pulled toward the measured disturbances by a heavy quadratic
  penalty so the constraints are always satisfiable.
* `LqMhpe` fits the lifted parameters against the forward-Euler affine
  model, which turns the whole problem into a single convex QP.

Both are fail-operational: any unconverged solve returns the previous
estimate with a failure status.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import ad
from .dynamics import NX, ModelSpec, State, rk4_flat
from .nlp import EqualityConstraints, LeastSquares, NlpProblem, solve_nlp
from .qp import QpProblem, QpSettings, QpSolver
from .relaxation import (
    ParamBox,
    box_from_factors,
    drift_batch,
    input_matrix_batch,
    relax,
    transform_bounds,
)

PVW_ROWS = np.r_[0:3, 7:13]  # disturbance-bearing rows (no quaternion)


class HorizonWindow:
    """FIFO buffer of the last M transitions (x_j, u_j, w_j) -> x_{j+1}.

    Disturbances are the realized additive state increments (13-vectors with
    zero quaternion rows under the default disturbance channels).
    """

    def __init__(self, horizon: int, dt: float, x0: State):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.horizon = horizon
        self.dt = dt
        self._states: deque = deque([x0.vector()], maxlen=horizon + 1)
        self._inputs: deque = deque(maxlen=horizon)
        self._dists: deque = deque(maxlen=horizon)

    def __len__(self) -> int:
        return len(self._inputs)

    @property
    def is_full(self) -> bool:
        return len(self._inputs) == self.horizon

    def push_step(self, x_next: State, u: np.ndarray, w: np.ndarray) -> "HorizonWindow":
        """Append one transition; the oldest is evicted once M is exceeded."""
        self._inputs.append(np.asarray(u, dtype=float))
        self._dists.append(np.asarray(w, dtype=float))
        self._states.append(x_next.vector())
        return self

    def arrays(self):
        """(states (L+1, 13), inputs (L, m), disturbances (L, 13))."""
        return (
            np.array(self._states),
            np.array(self._inputs),
            np.array(self._dists),
        )


@dataclass
class EstimatorState:
    """Prior estimate, tuning weights, parameter box and slack penalty."""

    prev: np.ndarray  # previous estimate (physical or lifted coordinates)
    weights: np.ndarray  # diagonal of the prior weight matrix
    box: ParamBox
    slack_weight: float = 1e6
    include_quat_rows: bool = True

    def __post_init__(self):
        self.prev = np.asarray(self.prev, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if not self.box.contains(self.prev, tol=1e-12):
            raise ValueError("previous estimate must lie inside the parameter box")

    @property
    def rows(self) -> np.ndarray:
        return np.arange(NX) if self.include_quat_rows else PVW_ROWS


def tuning_weights(theta0: np.ndarray) -> np.ndarray:
    """Reciprocal order-of-magnitude weights: w_i = 10^(-floor(log10 |t_i|))."""
    theta0 = np.asarray(theta0, dtype=float)
    if np.any(theta0 == 0.0):
        raise ValueError("tuning heuristic undefined for zero nominal entries")
    return 10.0 ** (-np.floor(np.log10(np.abs(theta0))))


def nominal_estimator_state(
    spec: ModelSpec, lo: float = 0.5, hi: float = 1.5, **kw
) -> EstimatorState:
    theta0 = spec.params.vector()
    return EstimatorState(
        prev=theta0.copy(),
        weights=tuning_weights(theta0),
        box=box_from_factors(spec.params, lo, hi),
        **kw,
    )


def relaxed_estimator_state(
    spec: ModelSpec, lo: float = 0.5, hi: float = 1.5, **kw
) -> EstimatorState:
    vt0 = relax(spec.params).vector()
    return EstimatorState(
        prev=vt0.copy(),
        weights=tuning_weights(vt0),
        box=transform_bounds(box_from_factors(spec.params, lo, hi), spec.params.n_rotors),
        **kw,
    )


@dataclass
class EstimateResult:
    estimate: np.ndarray
    solve_time: float
    status: str
    objective: float = float("nan")
    iterations: int = 0


class LqMhpe:
    """Convexified estimator: one QP over (lifted parameters, slacks).

    Internally the parameter block is expressed in magnitude-normalized
    coordinates (the scales the tuning heuristic identifies), which keeps the
    QP data within a few orders of magnitude; the substitution is exact.
    """

    def __init__(self, est: EstimatorState, settings: QpSettings | None = None):
        if est.box.space != "relaxed":
            raise ValueError("LqMhpe needs a lifted-space parameter box")
        self.est = est
        self._scale = 1.0 / np.sqrt(est.weights)
        self._solver = QpSolver(settings or QpSettings(
            scaling_iters=5, check_interval=10, rho_update_interval=50, refine_iters=2,
            shortcut_rounds=5))
        self._warm = None

    def estimate(self, window: HorizonWindow) -> EstimateResult:
        t0 = time.perf_counter()
        est = self.est
        if not window.is_full:
            return EstimateResult(est.prev.copy(), time.perf_counter() - t0, "window-not-full")
        xs, us, ws = window.arrays()
        rows = est.rows
        n_rows = rows.size
        steps = len(window)
        p = est.prev.size
        n = p + steps * n_rows
        dt = window.dt
        s = self._scale  # vt = s * z

        # equality rows: dt*G_j (s*z) + wt_j = x_{j+1} - x_j - dt*F_j
        n_eq = steps * n_rows
        g_all = input_matrix_batch(xs[:-1], us)
        f_all = drift_batch(xs[:-1])
        a_mat = np.zeros((n_eq + p, n))
        a_mat[:n_eq, :p] = (dt * g_all[:, rows, :] * s[None, None, :]).reshape(n_eq, p)
        a_mat[:n_eq, p:] = np.eye(n_eq)
        a_mat[n_eq:, :p] = np.eye(p)
        rhs = (xs[1:] - xs[:-1] - dt * f_all)[:, rows].reshape(-1)
        l_vec = np.concatenate([rhs, est.box.lower / s])
        u_vec = np.concatenate([rhs, est.box.upper / s])

        w_meas = ws[:, rows].reshape(-1)
        p_diag = 2.0 * np.concatenate(
            [est.weights * s * s, np.full(n_eq, est.slack_weight)]
        )
        q_vec = -p_diag * np.concatenate([est.prev / s, w_meas])

        prob = QpProblem(np.diag(p_diag), q_vec, a_mat, l_vec, u_vec)
        warm_x = warm_y = None
        if self._warm is not None and self._warm[0].size == n:
            warm_x, warm_y = self._warm
        sol = self._solver.solve(prob, tol=1e-8, max_iter=2000, warm_x=warm_x, warm_y=warm_y)
        assert sol.status != "primal-infeasible", "slack variables make this QP feasible"
        elapsed = time.perf_counter() - t0
        if sol.status != "solved":
            return EstimateResult(est.prev.copy(), elapsed, sol.status, iterations=sol.iterations)
        self._warm = (sol.x, sol.y)
        vt_hat = np.clip(s * sol.x[:p], est.box.lower, est.box.upper)
        est.prev = vt_hat.copy()
        return EstimateResult(vt_hat, elapsed, "solved", sol.objective, sol.iterations)


class NonlinearMhpe:
    """Baseline estimator: SQP over the RK4-constrained NLP.

    Solved in magnitude-normalized parameter coordinates (exact substitution,
    same optimum) so the subproblem data stays well scaled.
    """

    def __init__(self, est: EstimatorState, max_iter: int = 30, tol: float = 1e-8):
        if est.box.space != "nominal":
            raise ValueError("NonlinearMhpe needs a physical-space parameter box")
        self.est = est
        self.max_iter = max_iter
        self.tol = tol
        self._scale = 1.0 / np.sqrt(est.weights)
        self._qp = QpSolver(QpSettings(
            scaling_iters=5, check_interval=10, rho_update_interval=50, refine_iters=2))

    def estimate(self, window: HorizonWindow) -> EstimateResult:
        t0 = time.perf_counter()
        est = self.est
        if not window.is_full:
            return EstimateResult(est.prev.copy(), time.perf_counter() - t0, "window-not-full")
        xs, us, ws = window.arrays()
        rows = est.rows
        n_rows = rows.size
        steps = len(window)
        p = est.prev.size
        n = p + steps * n_rows
        dt = window.dt
        w_meas = ws[:, rows].reshape(-1)
        s = self._scale  # theta = s * z

        sqrt_w = np.sqrt(np.concatenate([est.weights, np.full(steps * n_rows, est.slack_weight)]))
        scale_full = np.concatenate([s, np.ones(steps * n_rows)])
        target = np.concatenate([est.prev, w_meas])

        def residual(z):
            return sqrt_w * (scale_full * z - target)

        def residual_jac(z):
            return np.diag(sqrt_w * scale_full)

        def constraints(z):
            theta = s * z[:p]
            slacks = z[p:].reshape(steps, n_rows)
            pred = rk4_flat(xs[:-1], us, theta, dt)
            c = (xs[1:] - pred)[:, rows] - slacks
            return c.reshape(-1)

        def constraints_jac(z):
            theta_jet = ad.seed(s * z[:p], p)
            pred = rk4_flat(xs[:-1], us, theta_jet, dt)
            jac_theta = -pred.d[:, rows, :].reshape(steps * n_rows, p) * s[None, :]
            return np.hstack([jac_theta, -np.eye(steps * n_rows)])

        lower = np.concatenate([est.box.lower / s, np.full(steps * n_rows, -np.inf)])
        upper = np.concatenate([est.box.upper / s, np.full(steps * n_rows, np.inf)])
        prob = NlpProblem(
            n=n,
            x0=np.concatenate([est.prev / s, w_meas]),
            least_squares=LeastSquares(residual=residual, jacobian=residual_jac),
            equality=EqualityConstraints(fun=constraints, jacobian=constraints_jac),
            lower=lower,
            upper=upper,
        )
        try:
            res = solve_nlp(prob, tol=self.tol, max_iter=self.max_iter, qp_solver=self._qp)
        except (ValueError, np.linalg.LinAlgError):
            return EstimateResult(est.prev.copy(), time.perf_counter() - t0, "solver-error")
        elapsed = time.perf_counter() - t0
        if res.status != "solved":
            return EstimateResult(est.prev.copy(), elapsed, res.status, iterations=res.iterations)
        theta_hat = np.clip(s * res.x[:p], est.box.lower, est.box.upper)
        est.prev = theta_hat.copy()
        return EstimateResult(theta_hat, elapsed, "solved", res.objective, res.iterations)


def estimate_lq(window: HorizonWindow, est: EstimatorState) -> EstimateResult:
    """One-shot convexified estimate (no warm-start reuse)."""
    return LqMhpe(est).estimate(window)


def estimate_nonlinear(window: HorizonWindow, est: EstimatorState) -> EstimateResult:
    """One-shot nonlinear estimate."""
    return NonlinearMhpe(est).estimate(window)

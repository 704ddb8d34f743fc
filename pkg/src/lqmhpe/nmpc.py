"""Receding-horizon trajectory optimizer over the full nonlinear dynamics.

Multiple-shooting transcription with the RK4-discretized model as the defect
constraint, solved by SQP: the states are eliminated from each subproblem
through the linearized dynamics (exact condensing), the resulting input-space
box QP goes to the operator-splitting solver, and steps are globalized with an
l1 merit on the defects. The planner accepts either a physical parameter
estimate or a lifted one; in the lifted case the prediction model is the
exactly equivalent relaxed form.

Warm starts shift the previous solution by one step; a failed solve returns
the shifted previous plan flagged as a fallback, so the control loop is
fail-operational.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import ad
from .dynamics import GRAVITY_W, NX, Q, NominalParams, State, rhs_nominal, rk4_flat
from .qp import QpProblem, QpSettings, QpSolver
from .relaxation import RelaxedParams, rhs_relaxed


@dataclass
class ParameterEstimate:
    """Parameter belief handed to the planner: physical or lifted coordinates."""

    kind: str  # "nominal" | "relaxed"
    vec: np.ndarray

    def __post_init__(self):
        if self.kind not in ("nominal", "relaxed"):
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        self.vec = np.asarray(self.vec, dtype=float)

    @classmethod
    def from_params(cls, params: NominalParams) -> "ParameterEstimate":
        return cls("nominal", params.vector())

    @classmethod
    def from_relaxed(cls, rel: RelaxedParams) -> "ParameterEstimate":
        return cls("relaxed", rel.vector())

    @property
    def mass(self) -> float:
        return float(self.vec[0]) if self.kind == "nominal" else 1.0 / float(self.vec[0])


@dataclass
class NmpcConfig:
    horizon: int = 25
    dt: float = 0.02
    u_max: float = 0.17
    n_rotors: int = 4
    # position / attitude / linear velocity / body-rate weights; the attitude
    # and rate blocks are deliberately heavy so the planner arrests tumbling
    # before the (thrust >= 0) inverted free-fall trap becomes locally optimal
    q_weights: np.ndarray = field(
        default_factory=lambda: np.array([10.0] * 3 + [50.0] * 4 + [1.0] * 3 + [10.0] * 3)
    )
    qf_scale: float = 10.0
    r_weight: float = 0.1
    x_ref: State = field(default_factory=State.hover)
    tol: float = 1e-6  # defect feasibility tolerance
    tol_stationarity: float | None = None  # step-norm exit; defaults to tol
    verify_converged: bool = True  # re-check the exit test on fresh sensitivities
    max_sqp_iter: int = 100
    qp_tol: float = 1e-8
    qp_max_iter: int | None = None
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY_W.copy())

    @property
    def stat_tol(self) -> float:
        return self.tol if self.tol_stationarity is None else self.tol_stationarity

    @property
    def qf_weights(self) -> np.ndarray:
        return self.qf_scale * self.q_weights


@dataclass
class PlannedTrajectory:
    states: np.ndarray  # (N+1, 13)
    inputs: np.ndarray  # (N, m)
    objective: float
    status: str  # solved | max-iter | fallback
    solve_time: float = 0.0
    iterations: int = 0


def apply_first(plan: PlannedTrajectory, u_max: float) -> np.ndarray:
    """First input of the plan, clamped into the actuator box."""
    if plan.inputs.shape[0] == 0:
        raise ValueError("empty plan")
    return np.clip(plan.inputs[0], 0.0, u_max)


class NmpcPlanner:
    """One planner instance per simulated vehicle; plan() is single-threaded."""

    def __init__(self, cfg: NmpcConfig):
        self.cfg = cfg
        self._qp = QpSolver(QpSettings(scaling_iters=3, shortcut_rounds=1))
        self._warm_y: np.ndarray | None = None
        self._eye = sp.eye(cfg.horizon * cfg.n_rotors, format="csc")

    # -- public API ----------------------------------------------------------

    def plan(
        self,
        x: State,
        estimate: ParameterEstimate,
        warm: PlannedTrajectory | None = None,
    ) -> PlannedTrajectory:
        t0 = time.perf_counter()
        cfg = self.cfg
        n, m = cfg.horizon, cfg.n_rotors
        rhs = rhs_nominal if estimate.kind == "nominal" else rhs_relaxed
        pvec = estimate.vec
        u_ref = float(np.clip(
            estimate.mass * np.linalg.norm(cfg.gravity) / m, 0.0, cfg.u_max
        ))
        x0 = x.vector()
        x_ref = cfg.x_ref.vector().copy()
        if x0[Q] @ x_ref[Q] < 0.0:
            x_ref[Q] = -x_ref[Q]  # cost in the hemisphere of the current attitude

        xs, u_init = self._initial_iterate(x0, warm, u_ref, pvec, rhs)
        if xs is None:
            return self._fallback(x, warm, u_ref, t0)

        try:
            result = self._sqp(xs, u_init, pvec, rhs, x_ref, u_ref)
        except (ValueError, np.linalg.LinAlgError):
            # overflow from a diverging iterate reaching the linear algebra
            result = None
        if result is None:
            return self._fallback(x, warm, u_ref, t0)
        states, inputs, objective, status, iterations = result
        return PlannedTrajectory(
            states=states,
            inputs=inputs,
            objective=objective,
            status=status,
            solve_time=time.perf_counter() - t0,
            iterations=iterations,
        )

    # -- internals -------------------------------------------------------------

    def _initial_inputs(self, warm, u_ref):
        n, m = self.cfg.horizon, self.cfg.n_rotors
        if warm is not None and warm.inputs.shape == (n, m) and np.all(np.isfinite(warm.inputs)):
            shifted = np.vstack([warm.inputs[1:], warm.inputs[-1:]])
            return np.clip(shifted, 0.0, self.cfg.u_max)
        return np.full((n, m), u_ref)

    def _initial_iterate(self, x0, warm, u_ref, pvec, rhs):
        """Shifted previous solution when available, hover rollout otherwise.

        Keeping the shifted states (rather than re-rolling out open loop, which
        amplifies deviations on this unstable plant) leaves the SQP a nearby,
        slightly infeasible iterate that it re-converges in a step or two.
        """
        cfg = self.cfg
        n = cfg.horizon
        u_init = self._initial_inputs(warm, u_ref)
        if (
            warm is not None
            and warm.status in ("solved", "max-iter")
            and warm.states.shape == (n + 1, NX)
            and np.all(np.isfinite(warm.states))
        ):
            xs = np.empty((n + 1, NX))
            xs[0] = x0
            xs[1:n] = warm.states[2:]
            xs[n] = warm.states[n]
            return xs, u_init
        xs = self._rollout(x0, u_init, pvec, rhs)
        if xs is None:
            u_init = np.full((n, cfg.n_rotors), u_ref)
            xs = self._rollout(x0, u_init, pvec, rhs)
        return xs, u_init

    def _rollout(self, x0, inputs, pvec, rhs):
        """Dynamically feasible state trajectory under the given inputs."""
        cfg = self.cfg
        xs = np.empty((cfg.horizon + 1, NX))
        xs[0] = x0
        for i in range(cfg.horizon):
            xs[i + 1] = rk4_flat(xs[i], inputs[i], pvec, cfg.dt, rhs=rhs, gravity=cfg.gravity)
            if not np.all(np.isfinite(xs[i + 1])) or np.abs(xs[i + 1]).max() > 1e7:
                return None
        return xs

    def _objective(self, xs, us, x_ref, u_ref):
        cfg = self.cfg
        dx = xs - x_ref
        du = us - u_ref
        stage = (dx[:-1] ** 2 @ cfg.q_weights).sum() + cfg.r_weight * (du ** 2).sum()
        return float(stage + dx[-1] ** 2 @ cfg.qf_weights)

    def _sqp(self, xs, us, pvec, rhs, x_ref, u_ref):
        cfg = self.cfg
        n, m = cfg.horizon, cfg.n_rotors
        nu_pen = 1.0
        status = "max-iter"
        iterations = cfg.max_sqp_iter

        w_stage = np.tile(cfg.q_weights, n)
        w_stage[-NX:] = cfg.qf_weights  # terminal block
        r_diag = np.full(n * m, cfg.r_weight)

        a_blk = b_blk = big_e = wE = h_mat = None
        f_val = None
        relin_needed = True

        for it in range(1, cfg.max_sqp_iter + 1):
            # re-linearize on demand: fresh sensitivities after damped steps or
            # large moves, frozen otherwise (then the QP reuses its warm
            # active set and the line-search evaluation doubles as the next
            # dynamics evaluation)
            fresh = relin_needed
            if relin_needed:
                x_jet = ad.seed(xs[:-1], NX + m, 0)
                u_jet = ad.seed(us, NX + m, NX)
                pred = rk4_flat(x_jet, u_jet, pvec, cfg.dt, rhs=rhs, gravity=cfg.gravity)
                f_val = pred.v  # (n, 13)
                if not np.all(np.isfinite(f_val)) or not np.all(np.isfinite(pred.d)):
                    return None
                a_blk = pred.d[:, :, :NX]  # (n, 13, 13)
                b_blk = pred.d[:, :, NX:]  # (n, 13, m)
                # condense: dx_{i+1} = A_i dx_i + B_i du_i + c_i with dx_0 = 0
                e_mat = np.zeros((n, NX, n * m))
                e_mat[0][:, 0:m] = b_blk[0]
                for i in range(1, n):
                    e_mat[i] = a_blk[i] @ e_mat[i - 1]
                    e_mat[i][:, i * m : (i + 1) * m] = b_blk[i]
                big_e = e_mat.reshape(n * NX, n * m)
                wE = big_e * w_stage[:, None]
                h_mat = 2.0 * (big_e.T @ wE + np.diag(r_diag))
                if not np.all(np.isfinite(h_mat)):
                    return None
                relin_needed = False
            elif f_val is None:
                f_val = rk4_flat(xs[:-1], us, pvec, cfg.dt, rhs=rhs, gravity=cfg.gravity)
                if not np.all(np.isfinite(f_val)):
                    return None
            defects = f_val - xs[1:]
            e_vec = np.zeros((n, NX))
            e_vec[0] = defects[0]
            for i in range(1, n):
                e_vec[i] = a_blk[i] @ e_vec[i - 1] + defects[i]
            big_e_vec = e_vec.reshape(n * NX)

            ex = (xs[1:] - x_ref).reshape(n * NX)
            eu = (us - u_ref).reshape(n * m)
            g_vec = 2.0 * (wE.T @ (ex + big_e_vec) + r_diag * eu)
            if not np.all(np.isfinite(g_vec)):
                return None

            lo = -us.reshape(-1)
            hi = cfg.u_max - us.reshape(-1)
            sub = QpProblem(h_mat, g_vec, self._eye, lo, hi)
            sol = self._qp.solve(sub, tol=cfg.qp_tol, max_iter=cfg.qp_max_iter,
                                 warm_y=self._warm_y)
            if sol.status not in ("solved", "max-iter"):
                return None
            self._warm_y = sol.y
            du = sol.x
            dx = (big_e @ du + big_e_vec).reshape(n, NX)

            defect_norm = float(np.abs(defects).max())
            if defect_norm <= cfg.tol and float(np.abs(du).max()) <= cfg.stat_tol:
                if fresh or not cfg.verify_converged:
                    status = "solved"
                    iterations = it
                    break
                relin_needed = True  # verify convergence on fresh sensitivities
                continue

            if fresh:
                # dual estimate for the merit penalty (backward recursion)
                lam = 2.0 * cfg.qf_weights * (xs[-1] - x_ref)
                lam_max = float(np.abs(lam).max())
                for i in range(n - 1, 0, -1):
                    lam = 2.0 * cfg.q_weights * (xs[i] - x_ref) + a_blk[i].T @ lam
                    lam_max = max(lam_max, float(np.abs(lam).max()))
                nu_pen = max(nu_pen, 1.2 * lam_max + 1e-3)

            phi0 = self._objective(xs, us, x_ref, u_ref) + nu_pen * float(np.abs(defects).sum())
            dphi = float(g_vec @ du) - nu_pen * float(np.abs(defects).sum())
            if dphi > -1e-16:
                dphi = -1e-16
            alpha = 1.0
            accepted = False
            while alpha >= 1e-10:
                xs_try = xs.copy()
                xs_try[1:] += alpha * dx
                us_try = np.clip(us + alpha * du.reshape(n, m), 0.0, cfg.u_max)
                f_try = rk4_flat(xs_try[:-1], us_try, pvec, cfg.dt, rhs=rhs, gravity=cfg.gravity)
                if np.all(np.isfinite(f_try)):
                    c_try = float(np.abs(f_try - xs_try[1:]).sum())
                    phi_try = self._objective(xs_try, us_try, x_ref, u_ref) + nu_pen * c_try
                    if phi_try <= phi0 + 1e-4 * alpha * dphi:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                if defect_norm <= 10 * cfg.tol:
                    status = "solved"  # stalled at numerical precision, feasible
                    iterations = it
                    break
                return None
            xs, us = xs_try, us_try
            f_val = f_try  # dynamics at the accepted iterate, reused next round
            if alpha < 1.0 or it % 5 == 0:
                relin_needed = True

        return xs, us, self._objective(xs, us, x_ref, u_ref), status, iterations

    def _fallback(self, x, warm, u_ref, t0):
        """Previous plan shifted by one step (or hover feedforward) with a flag."""
        cfg = self.cfg
        n, m = cfg.horizon, cfg.n_rotors
        inputs = self._initial_inputs(warm, u_ref)
        states = np.tile(x.vector(), (n + 1, 1))
        return PlannedTrajectory(
            states=states,
            inputs=inputs,
            objective=float("nan"),
            status="fallback",
            solve_time=time.perf_counter() - t0,
            iterations=0,
        )

"""Sequential quadratic programming for smooth constrained problems.

Least-squares objectives get a Gauss-Newton Hessian model; generic objectives
fall back to damped BFGS. Each SQP subproblem is a convex QP handed to the
operator-splitting solver in `qp`, with an elastic (slack-augmented) retry if
the linearized constraints are inconsistent. Steps are globalized by an l1
merit function with Armijo backtracking, so the merit value is non-increasing
across accepted iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import ad
from .ad import DerivativeProvider  # re-exported: derivative provider surface
from .qp import INF, QpProblem, QpSolver


def jacobian(f: Callable, x: np.ndarray, mode: str = "ad") -> np.ndarray:
    """Jacobian of a vector function: forward AD by default, FD as cross-check."""
    return ad.DerivativeProvider(mode).jacobian(f, x)


@dataclass
class LeastSquares:
    """Objective ||r(x)||^2 with an optionally analytic residual Jacobian."""

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class EqualityConstraints:
    fun: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class NlpProblem:
    """Smooth NLP: min f(x) s.t. c(x) = 0, lb <= x <= ub.

    Exactly one of `objective` / `least_squares` drives the cost model.
    Callbacks must be deterministic and smooth near the feasible set.
    """

    n: int
    x0: np.ndarray
    objective: Callable[[np.ndarray], float] | None = None
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    least_squares: LeastSquares | None = None
    equality: EqualityConstraints | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    fd_step: float = 1e-6

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.size != self.n:
            raise ValueError("x0 dimension mismatch")
        if self.objective is None and self.least_squares is None:
            raise ValueError("provide an objective or a least-squares residual")
        if self.lower is None:
            self.lower = np.full(self.n, -INF)
        if self.upper is None:
            self.upper = np.full(self.n, INF)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.x0 < self.lower - 1e-12) or np.any(self.x0 > self.upper + 1e-12):
            raise ValueError("initial guess must lie within the variable bounds")

    def f(self, x: np.ndarray) -> float:
        if self.least_squares is not None:
            r = self.least_squares.residual(x)
            return float(r @ r)
        return float(self.objective(x))


@dataclass
class NlpResult:
    x: np.ndarray
    status: str  # solved | max-iter | line-search-failure
    iterations: int
    kkt_residual: float
    objective: float
    merit_history: list = field(default_factory=list)


def _finite_bound_rows(lower, upper):
    idx = np.where((lower > -INF) | (upper < INF))[0]
    return idx


def solve_nlp(
    prob: NlpProblem,
    tol: float = 1e-8,
    max_iter: int = 100,
    qp_solver: QpSolver | None = None,
) -> NlpResult:
    """SQP with Gauss-Newton/BFGS Hessian models and an l1-merit line search."""
    qp_solver = qp_solver or QpSolver()
    x = prob.x0.copy()
    n = prob.n
    provider = ad.DerivativeProvider("fd", prob.fd_step)

    has_eq = prob.equality is not None
    nu = 1.0  # l1 merit penalty on constraint violation
    bfgs_h = np.eye(n)
    grad_prev = None
    step_prev = None
    merit_history: list = []
    warm_x = warm_y = None

    def eval_cost_model(xk):
        if prob.least_squares is not None:
            ls = prob.least_squares
            r = ls.residual(xk)
            jr = ls.jacobian(xk) if ls.jacobian else provider.jacobian(ls.residual, xk)
            g = 2.0 * jr.T @ r
            h = 2.0 * jr.T @ jr
            h = h + (1e-10 * max(1.0, np.trace(h) / max(n, 1))) * np.eye(n)
            return float(r @ r), g, h
        fval = float(prob.objective(xk))
        if prob.gradient is not None:
            g = np.asarray(prob.gradient(xk), dtype=float)
        else:
            g = provider.gradient(prob.objective, xk)
        return fval, g, None  # Hessian supplied by BFGS outside

    def eval_eq(xk):
        if not has_eq:
            return np.zeros(0), np.zeros((0, n))
        c = np.asarray(prob.equality.fun(xk), dtype=float)
        jc = (
            prob.equality.jacobian(xk)
            if prob.equality.jacobian
            else provider.jacobian(prob.equality.fun, xk)
        )
        return c, jc

    def merit(xk, nu_k):
        c = np.asarray(prob.equality.fun(xk), dtype=float) if has_eq else np.zeros(0)
        return prob.f(xk) + nu_k * np.abs(c).sum()

    box_rows = _finite_bound_rows(prob.lower, prob.upper)
    status = "max-iter"
    iters_done = max_iter
    kkt_res = np.inf

    for it in range(1, max_iter + 1):
        fval, g, h = eval_cost_model(x)
        if h is None:
            if grad_prev is not None and step_prev is not None:
                bfgs_h = _damped_bfgs_update(bfgs_h, step_prev, g - grad_prev)
            h = bfgs_h
        c, jc = eval_eq(x)

        # SQP subproblem in the step d (dense assembly; these stay small)
        n_eq = c.size
        k_rows = n_eq + box_rows.size
        a_mat = np.zeros((k_rows, n))
        l_vec = np.empty(k_rows)
        u_vec = np.empty(k_rows)
        if n_eq:
            a_mat[:n_eq] = jc
            l_vec[:n_eq] = -c
            u_vec[:n_eq] = -c
        if box_rows.size:
            a_mat[n_eq + np.arange(box_rows.size), box_rows] = 1.0
            l_vec[n_eq:] = prob.lower[box_rows] - x[box_rows]
            u_vec[n_eq:] = prob.upper[box_rows] - x[box_rows]

        sub = QpProblem(h, g, a_mat, l_vec, u_vec)
        sol = qp_solver.solve(sub, tol=min(tol, 1e-8), warm_x=warm_x, warm_y=warm_y)
        if sol.status not in ("solved", "max-iter"):
            # inconsistent linearization: elastic subproblem with l1 slacks
            sol = _elastic_subproblem(qp_solver, h, g, jc, c, prob, x, box_rows, nu, tol)
            if sol is None:
                status = "line-search-failure"
                iters_done = it
                break
        d = sol.x[:n]
        y_eq = sol.y[:n_eq] if n_eq else np.zeros(0)
        warm_x, warm_y = None, None  # geometry changes between iterations

        # penalty large enough to make d a merit descent direction
        if n_eq:
            nu = max(nu, 1.2 * float(np.abs(y_eq).max()) + 1e-3)

        # KKT residual at the current iterate (projected gradient of the Lagrangian)
        grad_lag = g + (jc.T @ y_eq if n_eq else 0.0)
        proj = np.clip(x - grad_lag, prob.lower, prob.upper) - x
        kkt_res = max(
            float(np.abs(proj).max()) if n else 0.0,
            float(np.abs(c).max()) if n_eq else 0.0,
        )
        if kkt_res <= tol:
            status = "solved"
            iters_done = it
            merit_history.append(merit(x, nu))
            break

        # Armijo backtracking on the l1 merit
        phi0 = merit(x, nu)
        merit_history.append(phi0)
        dphi = float(g @ d) - nu * float(np.abs(c).sum())
        if dphi > -1e-16:
            dphi = -1e-16
        alpha = 1.0
        accepted = False
        while alpha >= 1e-12:
            x_try = np.clip(x + alpha * d, prob.lower, prob.upper)
            if merit(x_try, nu) <= phi0 + 1e-4 * alpha * dphi:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "line-search-failure"
            iters_done = it
            break
        step_prev = x_try - x
        grad_prev = g
        x = x_try
        if float(np.abs(step_prev).max()) <= 1e-14:
            # no movement left at this precision: report converged-to-tolerance
            status = "solved" if kkt_res <= 10 * tol else status
            iters_done = it
            break

    return NlpResult(
        x=x,
        status=status,
        iterations=iters_done,
        kkt_residual=float(kkt_res),
        objective=prob.f(x),
        merit_history=merit_history,
    )


def _elastic_subproblem(qp_solver, h, g, jc, c, prob, x, box_rows, nu, tol):
    """l1-relaxed subproblem: min 0.5 d'Hd + g'd + gamma 1'(s+ + s-) with
    Jc d - s+ + s- = -c. Always feasible."""
    n = g.size
    n_eq = c.size
    if n_eq == 0:
        return None
    gamma = 100.0 * (nu + 1.0)
    n_tot = n + 2 * n_eq
    h_big = sp.block_diag(
        [sp.csc_matrix(h), sp.eye(2 * n_eq) * 1e-10], format="csc"
    )
    g_big = np.concatenate([g, np.full(2 * n_eq, gamma)])
    eq_block = sp.hstack([sp.csr_matrix(jc), -sp.eye(n_eq), sp.eye(n_eq)], format="csr")
    rows = [eq_block]
    lo = [-c]
    hi = [-c]
    if box_rows.size:
        eye = sp.eye(n_tot, format="csr")[box_rows]
        rows.append(eye)
        lo.append(prob.lower[box_rows] - x[box_rows])
        hi.append(prob.upper[box_rows] - x[box_rows])
    slack_rows = sp.eye(n_tot, format="csr")[n:]
    rows.append(slack_rows)
    lo.append(np.zeros(2 * n_eq))
    hi.append(np.full(2 * n_eq, INF))
    sub = QpProblem(h_big, g_big, sp.vstack(rows, format="csr"),
                    np.concatenate(lo), np.concatenate(hi))
    sol = qp_solver.solve(sub, tol=min(tol, 1e-8))
    if sol.status not in ("solved", "max-iter"):
        return None
    sol.x = sol.x[:n_tot]
    return sol


def _damped_bfgs_update(h, s, y):
    """Powell-damped BFGS keeping the Hessian model positive definite."""
    hs = h @ s
    shs = float(s @ hs)
    sy = float(s @ y)
    if shs <= 1e-16:
        return h
    if sy >= 0.2 * shs:
        theta = 1.0
    else:
        theta = 0.8 * shs / (shs - sy)
    r = theta * y + (1.0 - theta) * hs
    sr = float(s @ r)
    if sr <= 1e-16:
        return h
    return h - np.outer(hs, hs) / shs + np.outer(r, r) / sr

"""Operator-splitting (ADMM) convex quadratic program solver.

Solves
    minimize    0.5 x'Px + q'x
    subject to  l <= Ax <= u
where equalities are encoded via l = u and simple bounds via identity rows.

The algorithm follows the standard operator-splitting scheme: Ruiz
equilibration of the KKT data plus cost normalization, a factorized
quasi-definite KKT system reused across iterations, over-relaxation,
per-row penalties (boosted on equality rows), optional penalty adaptation
(with re-factorization), primal/dual infeasibility certificates, and an
active-set polishing step. Termination is measured on unscaled residuals.

Warm-start friendly: passing the previous (x, y) pair typically collapses the
iteration count on a repeated or slowly varying problem, which the moving
horizon exploits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = 1e30  # bounds at or beyond this magnitude are treated as infinite


def _dense(mat) -> np.ndarray:
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


@dataclass
class QpProblem:
    """Problem data; P must be symmetric PSD and l <= u componentwise."""

    P: "np.ndarray | sp.spmatrix"
    q: np.ndarray
    A: "np.ndarray | sp.spmatrix"
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        n = self.q.size
        # dense P is kept dense (the box fast path consumes it directly)
        if not sp.issparse(self.P):
            self.P = np.asarray(self.P, dtype=float)
            if self.P.shape != (n, n):
                raise ValueError(f"P must be {n}x{n}")
            sym_gap = float(np.abs(self.P - self.P.T).max()) if n else 0.0
            if sym_gap > 1e-12 * max(1.0, float(np.abs(self.P).max()) if n else 1.0):
                raise ValueError("P must be symmetric within 1e-12")
        else:
            self.P = self.P.tocsc()
            if self.P.shape != (n, n):
                raise ValueError(f"P must be {n}x{n}")
            sym_gap = abs(self.P - self.P.T).max() if self.P.nnz else 0.0
            if sym_gap > 1e-12 * max(1.0, abs(self.P).max()):
                raise ValueError("P must be symmetric within 1e-12")
        if sp.issparse(self.A):
            self.A = self.A.tocsc()
        else:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.shape[1] != n:
            raise ValueError(f"A must have {n} columns")
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.l.size != self.A.shape[0] or self.u.size != self.A.shape[0]:
            raise ValueError("bound vectors must match the number of constraint rows")
        if np.any(self.l > self.u):
            raise ValueError("l <= u must hold componentwise")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def p_diagonal(self) -> "np.ndarray | None":
        """Diagonal of P when P is diagonal, else None (cached)."""
        if not hasattr(self, "_p_diag_cache"):
            dense_p = _dense(self.P)
            diag = np.diag(dense_p).copy()
            self._p_diag_cache = diag if np.count_nonzero(dense_p - np.diag(diag)) == 0 else None
        return self._p_diag_cache

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str  # solved | max-iter | primal-infeasible | dual-infeasible
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    solve_time: float = 0.0


@dataclass
class QpSettings:
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    sigma: float = 1e-6
    alpha: float = 1.6
    max_iter: int = 4000
    check_interval: int = 25
    scaling_iters: int = 10
    adaptive_rho: bool = True
    rho_update_interval: int = 100
    max_rho_updates: int = 10
    cold_restart_after: int = 500  # drop a warm start that fails to converge
    polish: bool = True
    polish_delta: float = 1e-9
    refine_iters: int = 3
    shortcut_rounds: int = 2  # warm active-set refinement attempts
    eps_infeasible: float = 1e-8
    dense_threshold: int = 600  # use dense LAPACK when n + k is at most this


class _KktSolver:
    """Factorized quasi-definite KKT system [[P+sI, A'], [A, -1/rho]]."""

    def __init__(self, P, A, sigma, rho_vec, dense):
        n, k = A.shape[1], A.shape[0]
        self.n, self.k = n, k
        self.dense = dense
        if dense:
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = _dense(P) + sigma * np.eye(n)
            if k:
                a_dense = _dense(A)
                kkt[:n, n:] = a_dense.T
                kkt[n:, :n] = a_dense
                kkt[n:, n:] = -np.diag(1.0 / rho_vec)
            self.factor = sla.lu_factor(kkt)
        elif k:
            blocks = [[P + sigma * sp.eye(n), A.T], [A, -sp.diags(1.0 / rho_vec)]]
            self.factor = spla.splu(sp.bmat(blocks, format="csc"))
        else:
            self.factor = spla.splu((P + sigma * sp.eye(n)).tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            return sla.lu_solve(self.factor, rhs)
        return self.factor.solve(rhs)


class _BoxEigenSolver:
    """Reduced KKT for A = I (pure box) problems via one eigendecomposition.

    Eliminating the dual block turns the KKT solve into
    (P + (sigma + rho) I) xt = rhs, which the cached spectrum solves in two
    matvecs; changing the scalar penalty costs nothing, so it can be re-tuned
    at every residual check.
    """

    def __init__(self, P, sigma):
        self.sigma = sigma
        self.lam, self.v = sla.eigh(_dense(P), driver="evd")
        self.vt = self.v.T

    def solve_reduced(self, rhs: np.ndarray, rho: float) -> np.ndarray:
        w = self.vt @ rhs
        w /= self.lam + self.sigma + rho
        return self.v @ w

    def p_matvec(self, x: np.ndarray) -> np.ndarray:
        return self.v @ (self.lam * (self.vt @ x))


def _is_identity(A) -> bool:
    n, k = A.shape[1], A.shape[0]
    if n != k:
        return False
    if sp.issparse(A):
        if A.nnz != n:
            return False
        return (abs(A - sp.eye(n)).max() if A.nnz else 0.0) == 0.0
    return np.array_equal(A, np.eye(n))


def _abs_col_max(M, n):
    if sp.issparse(M):
        return abs(M).max(axis=0).toarray().ravel() if M.nnz else np.zeros(n)
    return np.abs(M).max(axis=0) if M.size else np.zeros(n)


def _abs_row_max(M, k):
    if sp.issparse(M):
        return abs(M).max(axis=1).toarray().ravel() if M.nnz else np.zeros(k)
    return np.abs(M).max(axis=1) if M.size else np.zeros(k)


def _ruiz_equilibrate(P, q, A, iters):
    """Modified Ruiz scaling of the KKT data plus cost normalization.

    Works on dense or sparse (P, A) without changing their storage class;
    small problems stay dense, which keeps this setup phase cheap.
    """
    n, k = P.shape[0], A.shape[0]
    d = np.ones(n)
    e = np.ones(k)
    c = 1.0
    P = P.copy()
    q = q.copy()
    A = A.copy()
    sparse = sp.issparse(P)
    for _ in range(iters):
        # column inf-norms of the scaled [P A'; A 0]
        col_x = np.maximum(_abs_col_max(P, n), _abs_col_max(A, n))
        row_a = _abs_row_max(A, k)
        dx = np.clip(1.0 / np.sqrt(np.maximum(col_x, 1e-8)), 1e-4, 1e4)
        de = np.clip(1.0 / np.sqrt(np.maximum(row_a, 1e-8)), 1e-4, 1e4)
        if sparse:
            Dx = sp.diags(dx)
            P = Dx @ P @ Dx
            if k:
                A = sp.diags(de) @ A @ Dx
        else:
            P = dx[:, None] * P * dx[None, :]
            if k:
                A = de[:, None] * A * dx[None, :]
        q = dx * q
        d *= dx
        e *= de
        # cost normalization
        col_p = _abs_col_max(P, n)
        gamma = 1.0 / max(np.mean(col_p) if n else 1.0, np.abs(q).max() if q.size else 1.0, 1e-8)
        gamma = min(max(gamma, 1e-6), 1e6)
        P = gamma * P
        q = gamma * q
        c *= gamma
    if sparse:
        P = P.tocsc()
        A = A.tocsc()
    return P, q, A, d, e, c


class QpSolver:
    """Single-use-at-a-time ADMM workspace; problems and solutions are values."""

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        self._eig_cache: tuple | None = None  # (P object id, _BoxEigenSolver)

    # -- public API --------------------------------------------------------

    def solve(
        self,
        prob: QpProblem,
        tol: float = 1e-8,
        max_iter: int | None = None,
        warm_x: np.ndarray | None = None,
        warm_y: np.ndarray | None = None,
    ) -> QpSolution:
        t0 = time.perf_counter()
        st = self.settings
        max_iter = max_iter or st.max_iter
        n, k = prob.n, prob.k

        if k and _is_identity(prob.A):
            return self._solve_box(prob, tol, max_iter, warm_x, warm_y, t0)

        # warm active-set shortcut (see _solve_box): one direct solve when the
        # previous duals still identify the right active set
        if k and warm_y is not None and st.polish:
            sol = self._try_shortcut(prob, warm_x, warm_y, tol, t0)
            if sol is not None:
                return sol

        # scaled copies; small problems are equilibrated and factorized dense
        dense = (n + k) <= st.dense_threshold
        if dense:
            p_work = _dense(prob.P)
            a_work = _dense(prob.A) if k else np.zeros((0, n))
        else:
            p_work = prob.P if sp.issparse(prob.P) else sp.csc_matrix(prob.P)
            a_work = prob.A if sp.issparse(prob.A) else sp.csc_matrix(prob.A)
        if st.scaling_iters > 0:
            Ps, qs, As, d, e, c = _ruiz_equilibrate(p_work, prob.q, a_work, st.scaling_iters)
        else:
            Ps, qs, As = p_work, prob.q, a_work
            d, e, c = np.ones(n), np.ones(k), 1.0
        ls = e * prob.l if k else prob.l.copy()
        us = e * prob.u if k else prob.u.copy()

        # per-row penalties: equalities get a stiffer rho
        rho_base = st.rho
        rho_vec = self._rho_vector(rho_base, ls, us, st)
        kkt = _KktSolver(Ps, As, st.sigma, rho_vec, dense) if k else _KktSolver(
            Ps, As, st.sigma, np.ones(0), dense
        )

        # iterates (scaled space)
        if warm_x is not None:
            x = (warm_x / d).astype(float)
        else:
            x = np.zeros(n)
        if warm_y is not None and k:
            y = (warm_y / e * c).astype(float)
        else:
            y = np.zeros(k)
        z = np.clip(As @ x, ls, us) if k else np.zeros(0)

        status = "max-iter"
        iters_done = max_iter
        pri_res = dua_res = np.inf
        rho_updates = 0
        next_polish_attempt = st.check_interval
        warm_pending = warm_x is not None or warm_y is not None
        x_prev = x.copy()
        y_prev = y.copy()

        for it in range(1, max_iter + 1):
            if warm_pending and it == st.cold_restart_after:
                # a poisoned warm start can stall the splitting; restart cold
                warm_pending = False
                x = np.zeros(n)
                y = np.zeros(k)
                z = np.clip(As @ x, ls, us) if k else np.zeros(0)
            x_prev[:] = x
            y_prev[:] = y
            # step 1: KKT solve
            rhs = np.concatenate([st.sigma * x - qs, z - y / rho_vec]) if k else (st.sigma * x - qs)
            sol = kkt.solve(rhs)
            x_tilde = sol[:n]
            if k:
                nu = sol[n:]
                z_tilde = z + (nu - y) / rho_vec
                # step 2: over-relaxed updates
                x = st.alpha * x_tilde + (1.0 - st.alpha) * x
                z_new = np.clip(st.alpha * z_tilde + (1.0 - st.alpha) * z + y / rho_vec, ls, us)
                y = y + rho_vec * (st.alpha * z_tilde + (1.0 - st.alpha) * z - z_new)
                z = z_new
            else:
                x = st.alpha * x_tilde + (1.0 - st.alpha) * x

            if it == 1 or it % st.check_interval == 0 or it == max_iter:
                pri_res, dua_res, eps_pri, eps_dua = self._residuals(
                    prob, x * d, (y * e / c) if k else y, (z / e) if k else z, tol
                )
                if pri_res <= eps_pri and dua_res <= eps_dua:
                    status = "solved"
                    iters_done = it
                    break
                if st.polish and k and it >= next_polish_attempt:
                    # opportunistic polish with geometric backoff: once the
                    # active set settles, the direct solve finishes early
                    next_polish_attempt *= 2
                    early = self._try_shortcut(prob, x * d, y * e / c, tol, t0, iters=it)
                    if early is not None:
                        return early
                if k and self._primal_infeasible(As, ls, us, y - y_prev, st.eps_infeasible):
                    status = "primal-infeasible"
                    iters_done = it
                    break
                if self._dual_infeasible(Ps, qs, As, ls, us, x - x_prev, st.eps_infeasible):
                    status = "dual-infeasible"
                    iters_done = it
                    break
                if not np.all(np.isfinite(x)):
                    # diverged iterates: declare infeasibility by divergence
                    status = "primal-infeasible"
                    iters_done = it
                    break
                # penalty adaptation
                if (
                    st.adaptive_rho
                    and k
                    and rho_updates < st.max_rho_updates
                    and it % st.rho_update_interval == 0
                ):
                    scale_p = max(pri_res / max(eps_pri, 1e-30), 1e-8)
                    scale_d = max(dua_res / max(eps_dua, 1e-30), 1e-8)
                    ratio = np.sqrt(scale_p / scale_d)
                    if ratio > 5.0 or ratio < 0.2:
                        rho_base = float(np.clip(rho_base * ratio, 1e-6, 1e6))
                        rho_vec = self._rho_vector(rho_base, ls, us, st)
                        kkt = _KktSolver(Ps, As, st.sigma, rho_vec, dense)
                        rho_updates += 1

        x_out = x * d
        y_out = (y * e / c) if k else y
        z_out = (z / e) if k else z

        if status == "solved" and st.polish and k:
            polished = self._polish(prob, x_out, y_out, tol)
            if polished is not None:
                x_out, y_out, pri_res, dua_res = polished
        elif status == "solved":
            pri_res, dua_res, _, _ = self._residuals(prob, x_out, y_out, z_out, tol)

        return QpSolution(
            x=x_out,
            y=y_out,
            status=status,
            iterations=iters_done,
            primal_residual=float(pri_res),
            dual_residual=float(dua_res),
            objective=prob.objective(x_out),
            solve_time=time.perf_counter() - t0,
        )

    def _try_shortcut(self, prob, x_guess, y_guess, tol, t0, iters=1):
        """Warm active-set refinement: up to three direct solves, adjusting the
        working set from multiplier signs and bound violations. Returns a
        solution only if the full unscaled KKT test passes at tol."""
        k = prob.k
        eq = (prob.u - prob.l) <= 1e-10
        thr = 1e-9 * max(1.0, float(np.abs(y_guess).max()) if k else 1.0)
        act_l = ~eq & (y_guess < -thr)
        act_u = ~eq & (y_guess > thr)
        for _ in range(self.settings.shortcut_rounds):
            solved = self._solve_active_set(prob, eq, act_l, act_u)
            if solved is None:
                return None
            x_s, y_s = solved
            ax = prob.A @ x_s
            eps_pri = tol + tol * max(
                float(np.abs(ax).max(initial=0.0)), float(np.abs(x_s).max(initial=0.0))
            )
            sign_tol = 1e-9 * max(1.0, float(np.abs(y_s).max(initial=0.0)))
            bad_l = act_l & (y_s > sign_tol)
            bad_u = act_u & (y_s < -sign_tol)
            viol_l = ~eq & ~act_l & (ax < prob.l - eps_pri)
            viol_u = ~eq & ~act_u & (ax > prob.u + eps_pri)
            if not (bad_l.any() or bad_u.any() or viol_l.any() or viol_u.any()):
                px = prob.P @ x_s
                dua = float(np.abs(px + prob.q + prob.A.T @ y_s).max())
                eps_dua = tol + tol * max(
                    float(np.abs(px).max(initial=0.0)),
                    float(np.abs(prob.A.T @ y_s).max(initial=0.0)),
                    float(np.abs(prob.q).max(initial=0.0)),
                )
                pri = float(np.maximum(prob.l - ax, 0.0).max(initial=0.0))
                pri = max(pri, float(np.maximum(ax - prob.u, 0.0).max(initial=0.0)))
                if pri <= eps_pri and dua <= eps_dua:
                    return QpSolution(
                        x=x_s, y=y_s, status="solved", iterations=iters,
                        primal_residual=pri, dual_residual=dua,
                        objective=prob.objective(x_s),
                        solve_time=time.perf_counter() - t0,
                    )
                return None
            act_l = (act_l & ~bad_l) | viol_l
            act_u = (act_u & ~bad_u) | viol_u
        return None

    def _solve_active_set(self, prob, eq, act_l, act_u):
        """Regularized reduced-KKT solve on a fixed working set.

        Problems whose equality rows carry singleton slack columns (the
        moving-horizon estimators) are condensed analytically to a core system
        in the remaining variables; everything else takes a dense LU on the
        full reduced KKT.
        """
        st = self.settings
        n, k = prob.n, prob.k
        eq_rows = np.where(eq)[0]
        l_rows = np.where(act_l)[0]
        u_rows = np.where(act_u)[0]
        act_rows = np.concatenate([eq_rows, l_rows, u_rows]).astype(int)
        n_act = act_rows.size
        condensed = self._solve_active_set_condensed(prob, eq_rows, l_rows, u_rows)
        if condensed is not None:
            return condensed
        m_red = n + n_act
        kkt = np.zeros((m_red, m_red))
        kkt[:n, :n] = _dense(prob.P)
        if n_act:
            a_red = _dense(prob.A[act_rows])
            kkt[:n, n:] = a_red.T
            kkt[n:, :n] = a_red
        # regularize in place; refinement corrects for the +/-delta shift
        diag = np.concatenate([np.full(n, st.polish_delta), np.full(n_act, -st.polish_delta)])
        kkt[np.arange(m_red), np.arange(m_red)] += diag
        rhs = np.concatenate(
            [-prob.q, prob.l[eq_rows], prob.l[l_rows], prob.u[u_rows]]
        )
        try:
            factor = sla.lu_factor(kkt, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = sla.lu_solve(factor, rhs, check_finite=False)
        for _ in range(st.refine_iters):
            residual = rhs - kkt @ sol + diag * sol  # unregularized residual
            sol = sol + sla.lu_solve(factor, residual, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        x_s = sol[:n]
        y_s = np.zeros(k)
        y_s[act_rows] = sol[n:]
        return x_s, y_s

    def _slack_structure(self, prob):
        """Columns appearing with a single coefficient in one constraint row
        (free slack variables with diagonal cost); cached per problem."""
        if hasattr(prob, "_slack_cache"):
            return prob._slack_cache
        info = None
        p_diag = prob.p_diagonal
        if p_diag is not None and np.all(p_diag > 0.0) and prob.k:
            a = _dense(prob.A)
            col_nnz = np.count_nonzero(a, axis=0)
            slack_cols = np.where(col_nnz == 1)[0]
            if slack_cols.size:
                rows = np.argmax(a[:, slack_cols] != 0.0, axis=0)
                coefs = a[rows, slack_cols]
                # one slack per row at most; drop duplicates
                _, first = np.unique(rows, return_index=True)
                info = (slack_cols[first], rows[first], coefs[first])
        prob._slack_cache = info
        return info

    def _solve_active_set_condensed(self, prob, eq_rows, l_rows, u_rows):
        """Active-set solve with singleton slack columns eliminated first.

        Only handles the case where every active equality row owns a slack
        column and the pinned inequality rows touch no slacks; returns None
        otherwise (caller falls back to the full reduced KKT).
        """
        info = self._slack_structure(prob)
        if info is None or eq_rows.size == 0:
            return None
        slack_cols, slack_rows, coefs = info
        row_to_slack = {int(r): i for i, r in enumerate(slack_rows)}
        if any(int(r) not in row_to_slack for r in eq_rows):
            return None
        n, k = prob.n, prob.k
        p_diag = prob.p_diagonal
        a = _dense(prob.A)
        # active inequality rows must not involve slack columns
        pin_rows = np.concatenate([l_rows, u_rows]).astype(int)
        sel = np.asarray([row_to_slack[int(r)] for r in eq_rows], dtype=int)
        s_cols = slack_cols[sel]
        s_coef = coefs[sel]
        rest = np.setdiff1d(np.arange(n), s_cols, assume_unique=False)
        if pin_rows.size and np.count_nonzero(a[np.ix_(pin_rows, s_cols)]):
            return None

        a_r = a[np.ix_(eq_rows, rest)]  # coupling of core vars in slack rows
        b_eq = prob.l[eq_rows]
        p_s = p_diag[s_cols]
        q_s = prob.q[s_cols]
        # lam_row = -c1 + c2 * (A_r z); slack = (b - A_r z)/coef
        c2 = p_s / (s_coef ** 2)
        c1 = (p_s * b_eq + s_coef * q_s) / (s_coef ** 2)
        h_eff = np.diag(p_diag[rest]) + (a_r * c2[:, None]).T @ a_r
        g_eff = prob.q[rest] - a_r.T @ c1
        n_r = rest.size
        n_pin = pin_rows.size
        m_core = n_r + n_pin
        kkt = np.zeros((m_core, m_core))
        kkt[:n_r, :n_r] = h_eff
        if n_pin:
            a_pin = a[np.ix_(pin_rows, rest)]
            kkt[:n_r, n_r:] = a_pin.T
            kkt[n_r:, :n_r] = a_pin
            b_pin = np.concatenate([prob.l[l_rows], prob.u[u_rows]])
        diag = np.concatenate(
            [np.full(n_r, st_delta := self.settings.polish_delta), np.full(n_pin, -st_delta)]
        )
        kkt[np.arange(m_core), np.arange(m_core)] += diag
        rhs = np.concatenate([-g_eff, b_pin]) if n_pin else -g_eff
        try:
            factor = sla.lu_factor(kkt, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = sla.lu_solve(factor, rhs, check_finite=False)
        for _ in range(self.settings.refine_iters):
            residual = rhs - kkt @ sol + diag * sol
            sol = sol + sla.lu_solve(factor, residual, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        z = sol[:n_r]
        x_s = np.empty(n)
        x_s[rest] = z
        x_s[s_cols] = (b_eq - a_r @ z) / s_coef
        y_s = np.zeros(k)
        y_s[eq_rows] = -c1 + c2 * (a_r @ z)
        if n_pin:
            y_s[pin_rows] = sol[n_r:]
        return x_s, y_s

    def _solve_box(self, prob, tol, max_iter, warm_x, warm_y, t0):
        """ADMM fast path for pure box problems (A = I): cached spectrum,
        scalar penalty re-tuned for free at every residual check."""
        st = self.settings
        n = prob.n

        # warm active-set shortcut: if the previous duals identify a KKT-valid
        # active set at this data, one direct solve finishes the problem
        # (the common case across a receding horizon)
        if warm_y is not None and st.polish:
            sol = self._try_shortcut(prob, warm_x, warm_y, tol, t0)
            if sol is not None:
                return sol

        if self._eig_cache is not None and self._eig_cache[0] is prob.P:
            eig = self._eig_cache[1]
        else:
            eig = _BoxEigenSolver(prob.P, st.sigma)
            self._eig_cache = (prob.P, eig)
        lam_max = float(eig.lam[-1]) if n else 1.0
        lam_min = float(max(eig.lam[0], 1e-6 * max(lam_max, 1.0)))
        rho = float(np.sqrt(lam_min * max(lam_max, 1e-12))) or 1.0

        x = warm_x.astype(float).copy() if warm_x is not None else np.zeros(n)
        y = warm_y.astype(float).copy() if warm_y is not None else np.zeros(n)
        z = np.clip(x, prob.l, prob.u)
        alpha = st.alpha
        status = "max-iter"
        iters_done = max_iter
        pri = dua = np.inf
        x_prev = x.copy()

        for it in range(1, max_iter + 1):
            x_prev[:] = x
            rhs = st.sigma * x - prob.q + rho * z - y
            x_t = eig.solve_reduced(rhs, rho)
            x = alpha * x_t + (1.0 - alpha) * x
            z_pre = alpha * x_t + (1.0 - alpha) * z + y / rho
            z_new = np.clip(z_pre, prob.l, prob.u)
            y = y + rho * (alpha * x_t + (1.0 - alpha) * z - z_new)
            z = z_new

            if it == 1 or it % st.check_interval == 0 or it == max_iter:
                px = eig.p_matvec(x)
                pri = float(np.abs(x - z).max())
                dua = float(np.abs(px + prob.q + y).max())
                eps_pri = tol + tol * max(np.abs(x).max(), np.abs(z).max())
                eps_dua = tol + tol * max(np.abs(px).max(), np.abs(y).max(),
                                          np.abs(prob.q).max() if n else 0.0)
                if pri <= eps_pri and dua <= eps_dua:
                    status = "solved"
                    iters_done = it
                    break
                if self._dual_infeasible(prob.P, prob.q, prob.A, prob.l, prob.u,
                                         x - x_prev, st.eps_infeasible):
                    status = "dual-infeasible"
                    iters_done = it
                    break
                if st.adaptive_rho:
                    ratio = np.sqrt((pri / max(eps_pri, 1e-30)) / (dua / max(eps_dua, 1e-30)))
                    if ratio > 2.0 or ratio < 0.5:
                        rho = float(np.clip(rho * ratio, 1e-6, 1e8))

        if status == "solved" and st.polish:
            polished = self._polish(prob, x, y, tol)
            if polished is not None:
                x, y, pri, dua = polished
        return QpSolution(
            x=x, y=y, status=status, iterations=iters_done,
            primal_residual=float(pri), dual_residual=float(dua),
            objective=prob.objective(x), solve_time=time.perf_counter() - t0,
        )

    # -- internals -----------------------------------------------------------

    @staticmethod
    def _rho_vector(rho_base, ls, us, st):
        k = ls.size
        if k == 0:
            return np.ones(0)
        rho = np.full(k, rho_base)
        eq = (us - ls) <= 1e-10
        rho[eq] = rho_base * st.rho_eq_scale
        loose = (ls <= -INF) & (us >= INF)
        rho[loose] = 1e-6
        return rho

    @staticmethod
    def _residuals(prob, x, y, z, tol):
        ax = prob.A @ x if prob.k else np.zeros(0)
        px = prob.P @ x
        if prob.k:
            pri = np.abs(ax - z).max()
            aty = prob.A.T @ y
            eps_pri = tol + tol * max(np.abs(ax).max(), np.abs(z).max())
        else:
            pri = 0.0
            aty = 0.0
            eps_pri = tol
        dua = np.abs(px + prob.q + aty).max()
        scale = [np.abs(px).max(), np.abs(prob.q).max() if prob.q.size else 0.0]
        if prob.k:
            scale.append(np.abs(aty).max())
        eps_dua = tol + tol * max(scale)
        return pri, dua, eps_pri, eps_dua

    @staticmethod
    def _primal_infeasible(As, ls, us, dy, eps):
        norm = np.abs(dy).max() if dy.size else 0.0
        if norm <= eps:
            return False
        v = dy / norm
        lower = np.where(ls <= -INF, 0.0, ls)
        upper = np.where(us >= INF, 0.0, us)
        # components pushing on an infinite bound invalidate the certificate
        if np.any((us >= INF) & (v > eps)) or np.any((ls <= -INF) & (v < -eps)):
            return False
        gap = upper @ np.maximum(v, 0.0) + lower @ np.minimum(v, 0.0)
        if gap >= -eps:
            return False
        return np.abs(As.T @ v).max() < eps

    @staticmethod
    def _dual_infeasible(Ps, qs, As, ls, us, dx, eps):
        norm = np.abs(dx).max() if dx.size else 0.0
        if norm <= eps:
            return False
        v = dx / norm
        if qs @ v >= -eps:
            return False
        if np.abs(Ps @ v).max() >= eps:
            return False
        if As.shape[0]:
            av = As @ v
            ok_up = (us >= INF) | (av < eps)
            ok_lo = (ls <= -INF) | (av > -eps)
            if not np.all(ok_up & ok_lo):
                return False
        return True

    def _polish(self, prob, x, y, tol):
        """Re-solve on the identified active set with iterative refinement.

        Equality rows are always active; inequality rows are taken active only
        when their multiplier clearly leaves zero, and the polished multipliers
        must come back with complementarity-consistent signs or the polish is
        rejected (keeping the ADMM iterate).
        """
        st = self.settings
        n, k = prob.n, prob.k
        eq = (prob.u - prob.l) <= 1e-10
        thr = 1e-9 * max(1.0, float(np.abs(y).max()) if k else 1.0)
        act_l = ~eq & (y < -thr)
        act_u = ~eq & (y > thr)
        if not (eq.any() or act_l.any() or act_u.any()):
            try:
                x_pol = sla.solve(_dense(prob.P) + st.polish_delta * np.eye(n), -prob.q,
                                  assume_a="pos")
            except np.linalg.LinAlgError:
                return None
            return self._accept_polish(prob, x, y, x_pol, np.zeros(k), tol)

        solved = self._solve_active_set(prob, eq, act_l, act_u)
        if solved is None:
            return None
        x_pol, y_pol = solved
        sign_tol = 1e-9 * max(1.0, float(np.abs(y_pol).max(initial=0.0)))
        if np.any(y_pol[act_l] > sign_tol) or np.any(y_pol[act_u] < -sign_tol):
            return None  # wrong active set identified
        return self._accept_polish(prob, x, y, x_pol, y_pol, tol)

    def _accept_polish(self, prob, x, y, x_pol, y_pol, tol):
        if not np.all(np.isfinite(x_pol)):
            return None
        ax = prob.A @ x_pol if prob.k else np.zeros(0)
        if prob.k:
            pri_pol = float(np.maximum(prob.l - ax, 0.0).max(initial=0.0))
            pri_pol = max(pri_pol, float(np.maximum(ax - prob.u, 0.0).max(initial=0.0)))
        else:
            pri_pol = 0.0
        dua_pol = np.abs(prob.P @ x_pol + prob.q + (prob.A.T @ y_pol if prob.k else 0.0)).max()
        z_cur = np.clip(prob.A @ x, prob.l, prob.u) if prob.k else np.zeros(0)
        pri_cur, dua_cur, _, _ = self._residuals(prob, x, y, z_cur, tol)
        if max(pri_pol, dua_pol) <= max(pri_cur, dua_cur):
            return x_pol, y_pol, float(pri_pol), float(dua_pol)
        return None


def solve(prob: QpProblem, tol: float = 1e-8, max_iter: int | None = None,
          warm_x: np.ndarray | None = None, warm_y: np.ndarray | None = None,
          settings: QpSettings | None = None) -> QpSolution:
    """One-shot convenience wrapper around QpSolver."""
    return QpSolver(settings).solve(prob, tol=tol, max_iter=max_iter,
                                    warm_x=warm_x, warm_y=warm_y)


def dump_problem(prob: QpProblem, path: str) -> None:
    """Plain-text dump of (P, q, A, l, u) in coordinate format for cross-checks."""
    with open(path, "w") as fh:
        for name, mat in (("P", prob.P), ("A", prob.A)):
            coo = sp.coo_matrix(mat)
            fh.write(f"%% matrix {name} {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v!r}\n")
        for name, vec in (("q", prob.q), ("l", prob.l), ("u", prob.u)):
            fh.write(f"%% vector {name} {vec.size}\n")
            for v in vec:
                fh.write(f"{v!r}\n")

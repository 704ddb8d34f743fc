"""Self-contained oracle and property checks, runnable from the CLI.

Each check returns (name, passed, measured, threshold). The oracles here are
deliberately independent of the code paths they cross-check: the QP oracle
enumerates active sets by brute force, the gradient oracle uses central
differences, and the equivalence check compares two separately derived model
forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import ad
from .attitude import random_unit_quaternion
from .config import load_model
from .dynamics import rhs_nominal, rk4_flat
from .qp import INF, QpProblem, QpSolver
from .relaxation import (
    box_from_factors,
    drift_batch,
    input_matrix_batch,
    relax,
    relax_batch,
    transform_bounds,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: measured {self.measured:.3e} (threshold {self.threshold:.3e})"


# -- brute-force QP oracle -------------------------------------------------------


def active_set_solve(P, q, A, l, u, tol: float = 1e-9):
    """Globally optimal solution of a strictly convex QP by enumerating
    active sets over all finite inequality sides (<= ~2^12 of them).

    Equality rows (l == u) are always active. Returns (x, y) or None if no
    KKT-consistent candidate exists (infeasible problem).
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    k = A.shape[0] if A.size else 0

    eq_rows = [i for i in range(k) if u[i] - l[i] <= 1e-12]
    sides = []  # (row, bound_value, sign_requirement)
    for i in range(k):
        if i in eq_rows:
            continue
        if l[i] > -INF:
            sides.append((i, l[i], -1))
        if u[i] < INF:
            sides.append((i, u[i], +1))

    best = None
    for r in range(len(sides) + 1):
        for combo in combinations(range(len(sides)), r):
            rows = [sides[s][0] for s in combo]
            if len(set(rows)) != len(rows):
                continue  # both sides of one row cannot be active
            act_rows = eq_rows + rows
            act_vals = [l[i] for i in eq_rows] + [sides[s][1] for s in combo]
            signs = [0] * len(eq_rows) + [sides[s][2] for s in combo]
            na = len(act_rows)
            kkt = np.zeros((P.shape[0] + na, P.shape[0] + na))
            kkt[: P.shape[0], : P.shape[0]] = P
            if na:
                A_act = A[act_rows]
                kkt[: P.shape[0], P.shape[0] :] = A_act.T
                kkt[P.shape[0] :, : P.shape[0]] = A_act
            rhs = np.concatenate([-q, act_vals])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[: P.shape[0]]
            lam = sol[P.shape[0] :]
            # dual feasibility: upper-active rows need y >= 0, lower-active y <= 0
            ok = True
            for s, lam_i in zip(signs, lam):
                if s > 0 and lam_i < -tol:
                    ok = False
                elif s < 0 and lam_i > tol:
                    ok = False
            if not ok:
                continue
            if k:
                ax = A @ x
                if np.any(ax < l - 1e-7) or np.any(ax > u + 1e-7):
                    continue
            obj = 0.5 * x @ P @ x + q @ x
            if best is None or obj < best[2] - 1e-12:
                y = np.zeros(k)
                for i, lam_i in zip(act_rows, lam):
                    y[i] = lam_i
                best = (x, y, obj)
    if best is None:
        return None
    return best[0], best[1]


def random_box_qp(rng: np.random.Generator, n: int = 10, n_ineq: int = 5):
    """Random strictly convex QP with one-sided rows, feasible by construction."""
    m_half = rng.normal(size=(n, n))
    P = m_half @ m_half.T + 0.5 * np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(n_ineq, n))
    x_feas = rng.normal(size=n)
    l = np.full(n_ineq, -INF)
    u = np.full(n_ineq, INF)
    for i in range(n_ineq):
        slack = abs(rng.normal()) * 0.5
        if rng.uniform() < 0.5:
            u[i] = A[i] @ x_feas + slack
        else:
            l[i] = A[i] @ x_feas - slack
    return P, q, A, l, u


# -- check suite -----------------------------------------------------------------


def random_state_batch(rng: np.random.Generator, n: int, pos=5.0, vel=2.5, ang=2.5):
    """(n, 13) flat states with uniform components and unit quaternions."""
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return np.hstack(
        [
            rng.uniform(-pos, pos, (n, 3)),
            quats,
            rng.uniform(-vel, vel, (n, 3)),
            rng.uniform(-ang, ang, (n, 3)),
        ]
    )


def check_affine_equivalence(
    model: str = "crazyflie", n_samples: int = 10_000, seed: int = 0, corrupt: bool = False
) -> CheckResult:
    """F(x) + G(x,u) relax(theta) against the nonlinear derivative."""
    spec = load_model(model).spec
    theta = spec.params.vector()
    vt = relax(spec.params).vector()
    rng = np.random.default_rng(seed)
    xs = random_state_batch(rng, n_samples)
    us = rng.uniform(0, spec.u_max, (n_samples, spec.params.n_rotors))
    g_all = input_matrix_batch(xs, us)
    if corrupt:
        g_all[:, 10, 4:8] = -g_all[:, 10, 4:8]  # test hook: flipped sign in B(u) block
    lifted = drift_batch(xs) + np.einsum("nij,j->ni", g_all, vt)
    nonlinear = rhs_nominal(xs, us, theta)
    worst = float(np.abs(lifted - nonlinear).max())
    return CheckResult(f"affine-equivalence[{model}]", worst <= 1e-10, worst, 1e-10)


def check_qp_oracle(n_problems: int = 50, seed: int = 1) -> CheckResult:
    """ADMM solutions against brute-force active-set enumeration."""
    rng = np.random.default_rng(seed)
    solver = QpSolver()
    worst = 0.0
    for _ in range(n_problems):
        n_ineq = int(rng.integers(3, 13))
        P, q, A, l, u = random_box_qp(rng, n=10, n_ineq=n_ineq)
        ref = active_set_solve(P, q, A, l, u)
        assert ref is not None, "generator produced an infeasible QP"
        sol = solver.solve(QpProblem(P, q, A, l, u))
        if sol.status != "solved":
            worst = np.inf
            break
        worst = max(worst, float(np.abs(sol.x - ref[0]).max()))
    return CheckResult("qp-active-set-oracle", worst <= 1e-6, worst, 1e-6)


def check_gradients(n_points: int = 20, seed: int = 2, dt: float = 0.02) -> CheckResult:
    """AD Jacobians of the discretized dynamics against central differences."""
    spec = load_model("crazyflie").spec
    theta = spec.params.vector()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x = np.concatenate(
            [rng.uniform(-2, 2, 3), random_unit_quaternion(rng),
             rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)]
        )
        u = rng.uniform(0, spec.u_max, 4)
        z = np.concatenate([x, u, theta])

        def step(zz):
            return rk4_flat(zz[..., :13], zz[..., 13:17], zz[..., 17:], dt)

        j_ad = ad.jacobian(step, z)
        j_fd = ad.fd_jacobian(step, z)
        rel = np.abs(j_ad - j_fd).max() / max(1.0, np.abs(j_fd).max())
        worst = max(worst, float(rel))
    return CheckResult("rk4-jacobian-ad-vs-fd", worst <= 1e-5, worst, 1e-5)


def check_bound_soundness(model: str = "crazyflie", n_samples: int = 20_000,
                          seed: int = 3) -> CheckResult:
    """Sampled containment of relax(theta) in the transformed box."""
    spec = load_model(model).spec
    theta_box = box_from_factors(spec.params)
    vt_box = transform_bounds(theta_box)
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(theta_box.lower, theta_box.upper, (n_samples, 19))
    vts = relax_batch(thetas)
    inside = (vts >= vt_box.lower[None, :] - 1e-12) & (vts <= vt_box.upper[None, :] + 1e-12)
    violations = int(n_samples - inside.all(axis=1).sum())
    return CheckResult(f"bound-transform-soundness[{model}]", violations == 0,
                       float(violations), 0.0)


def run_checks(quick: bool = False, corrupt_input_matrix: bool = False) -> list[CheckResult]:
    """The validation battery behind `lqmhpe validate`."""
    n_equiv = 2000 if quick else 10_000
    n_qp = 20 if quick else 50
    n_grad = 5 if quick else 20
    n_sound = 5000 if quick else 20_000
    results = [
        check_affine_equivalence("crazyflie", n_equiv, corrupt=corrupt_input_matrix),
        check_affine_equivalence("fusion1", n_equiv, corrupt=corrupt_input_matrix),
        check_qp_oracle(n_qp),
        check_gradients(n_grad),
        check_bound_soundness("crazyflie", n_sound),
        check_bound_soundness("fusion1", n_sound),
    ]
    return results

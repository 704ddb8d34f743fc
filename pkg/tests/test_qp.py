"""ADMM QP solver checks against closed forms and the active-set oracle."""

import os

import numpy as np
import pytest

from lqmhpe.qp import INF, QpProblem, QpSettings, QpSolver, dump_problem
from lqmhpe.validate import active_set_solve, random_box_qp

RNG = np.random.default_rng(23)


def test_scalar_unconstrained():
    # min 0.5 x^2 - x -> x = 1
    prob = QpProblem(np.array([[1.0]]), np.array([-1.0]), np.zeros((0, 1)),
                     np.zeros(0), np.zeros(0))
    sol = QpSolver().solve(prob)
    assert sol.status == "solved"
    assert abs(sol.x[0] - 1.0) < 1e-8


def test_projection_onto_halfspace():
    # min 0.5||x||^2 s.t. x1 >= 1 -> (1, 0, 0)
    n = 3
    A = np.zeros((1, n))
    A[0, 0] = 1.0
    prob = QpProblem(np.eye(n), np.zeros(n), A, np.array([1.0]), np.array([INF]))
    sol = QpSolver().solve(prob)
    assert sol.status == "solved"
    assert np.abs(sol.x - np.array([1.0, 0.0, 0.0])).max() < 1e-8


def test_equality_constraint_encoding():
    # min 0.5||x||^2 s.t. x1 + x2 = 2 -> (1, 1)
    prob = QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]),
                     np.array([2.0]), np.array([2.0]))
    sol = QpSolver().solve(prob)
    assert sol.status == "solved"
    assert np.abs(sol.x - 1.0).max() < 1e-8


def test_matches_active_set_oracle():
    solver = QpSolver()
    for _ in range(40):
        n_ineq = int(RNG.integers(3, 13))
        P, q, A, l, u = random_box_qp(RNG, n=10, n_ineq=n_ineq)
        ref_x, ref_y = active_set_solve(P, q, A, l, u)
        sol = solver.solve(QpProblem(P, q, A, l, u))
        assert sol.status == "solved"
        assert np.abs(sol.x - ref_x).max() < 1e-6


def test_objective_not_beaten_by_feasible_points():
    for _ in range(10):
        P, q, A, l, u = random_box_qp(RNG, n=8, n_ineq=6)
        prob = QpProblem(P, q, A, l, u)
        sol = QpSolver().solve(prob)
        assert sol.status == "solved"
        # random feasible perturbations never undercut the reported optimum
        for _ in range(50):
            x_try = sol.x + RNG.normal(scale=0.1, size=8)
            ax = A @ x_try
            if np.all(ax >= l - 1e-12) and np.all(ax <= u + 1e-12):
                assert prob.objective(x_try) >= sol.objective - 1e-6


def test_scaling_invariance_of_argmin():
    P, q, A, l, u = random_box_qp(RNG, n=6, n_ineq=5)
    sol1 = QpSolver().solve(QpProblem(P, q, A, l, u))
    sol2 = QpSolver().solve(QpProblem(137.0 * P, 137.0 * q, A, l, u))
    assert np.abs(sol1.x - sol2.x).max() < 1e-8


def test_warm_start_does_not_increase_iterations():
    P, q, A, l, u = random_box_qp(RNG, n=10, n_ineq=8)
    prob = QpProblem(P, q, A, l, u)
    solver = QpSolver()
    cold = solver.solve(prob)
    warm = solver.solve(prob, warm_x=cold.x, warm_y=cold.y)
    assert warm.status == "solved"
    assert warm.iterations <= cold.iterations


def test_primal_infeasible_detected():
    # x <= 0 and x >= 1 cannot hold
    A = np.array([[1.0], [1.0]])
    l = np.array([-INF, 1.0])
    u = np.array([0.0, INF])
    sol = QpSolver().solve(QpProblem(np.array([[1.0]]), np.zeros(1), A, l, u))
    assert sol.status == "primal-infeasible"


def test_dual_infeasible_detected():
    # flat direction with a linear cost pushing along it: unbounded below
    P = np.diag([1.0, 0.0])
    q = np.array([0.0, -1.0])
    A = np.array([[1.0, 0.0]])
    sol = QpSolver().solve(QpProblem(P, q, A, np.array([-1.0]), np.array([1.0])))
    assert sol.status == "dual-infeasible"


def test_rejects_malformed_problems():
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2),
                  np.zeros((0, 2)), np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        QpProblem(np.eye(1), np.zeros(1), np.array([[1.0]]),
                  np.array([2.0]), np.array([1.0]))


def test_solved_status_meets_tolerance():
    for _ in range(10):
        P, q, A, l, u = random_box_qp(RNG, n=10, n_ineq=10)
        sol = QpSolver().solve(QpProblem(P, q, A, l, u), tol=1e-8)
        assert sol.status == "solved"
        assert sol.primal_residual <= 1e-6
        assert sol.dual_residual <= 1e-6


def test_dump_problem_roundtrippable_text(tmp_path):
    P, q, A, l, u = random_box_qp(RNG, n=4, n_ineq=3)
    path = os.path.join(tmp_path, "qp_dump.txt")
    dump_problem(QpProblem(P, q, A, l, u), path)
    text = open(path).read()
    assert "%% matrix P" in text and "%% vector q" in text
    assert f"{q[0]!r}" in text


def test_deterministic_given_fixed_inputs():
    P, q, A, l, u = random_box_qp(RNG, n=8, n_ineq=8)
    prob = QpProblem(P, q, A, l, u)
    s1 = QpSolver().solve(prob)
    s2 = QpSolver().solve(prob)
    assert np.array_equal(s1.x, s2.x)
    assert s1.iterations == s2.iterations

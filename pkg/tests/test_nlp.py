"""SQP and derivative-provider checks."""

import numpy as np
import pytest

from lqmhpe import ad
from lqmhpe.attitude import random_unit_quaternion
from lqmhpe.config import load_model
from lqmhpe.dynamics import rk4_flat
from lqmhpe.nlp import EqualityConstraints, LeastSquares, NlpProblem, jacobian, solve_nlp
from lqmhpe.qp import QpProblem, QpSolver

RNG = np.random.default_rng(31)
CRAZYFLIE = load_model("crazyflie").spec


# -- jacobian provider ------------------------------------------------------------


def test_jacobian_identity():
    assert np.array_equal(jacobian(lambda x: x, np.array([1.0, 2.0, 3.0])), np.eye(3))


def test_jacobian_linear_map_exact():
    a = RNG.normal(size=(4, 6))

    def f(x):
        # written with jet-safe operations: rows as dot products
        return ad.concat([ad.vdot(a[i], x) for i in range(4)])

    x = RNG.normal(size=6)
    assert np.abs(jacobian(f, x) - a).max() < 1e-15


def test_rk4_jacobian_ad_vs_fd():
    theta = CRAZYFLIE.params.vector()
    worst = 0.0
    for _ in range(10):
        x = np.concatenate([
            RNG.uniform(-2, 2, 3), random_unit_quaternion(RNG),
            RNG.uniform(-1, 1, 3), RNG.uniform(-1, 1, 3),
        ])
        u = RNG.uniform(0, CRAZYFLIE.u_max, 4)
        z = np.concatenate([x, u, theta])

        def step(zz):
            return rk4_flat(zz[..., :13], zz[..., 13:17], zz[..., 17:], 0.02)

        j_ad = ad.jacobian(step, z)
        j_fd = ad.fd_jacobian(step, z)
        worst = max(worst, np.abs(j_ad - j_fd).max() / max(1.0, np.abs(j_fd).max()))
    assert worst <= 1e-5


def test_jacobian_batched_matches_single():
    # one batched call over a horizon equals per-node Jacobians
    theta = CRAZYFLIE.params.vector()
    xs = np.stack([np.concatenate([RNG.uniform(-1, 1, 3), random_unit_quaternion(RNG),
                                   RNG.uniform(-1, 1, 3), RNG.uniform(-1, 1, 3)])
                   for _ in range(5)])
    us = RNG.uniform(0, CRAZYFLIE.u_max, (5, 4))
    x_jet = ad.seed(xs, 17, 0)
    u_jet = ad.seed(us, 17, 13)
    out = rk4_flat(x_jet, u_jet, theta, 0.02)
    for i in range(5):
        z = np.concatenate([xs[i], us[i]])
        j_single = ad.jacobian(lambda zz: rk4_flat(zz[..., :13], zz[..., 13:17], theta, 0.02), z)
        assert np.abs(out.d[i] - j_single).max() < 1e-12


# -- SQP ---------------------------------------------------------------------------


def test_unconstrained_scalar_quadratic():
    prob = NlpProblem(n=1, x0=np.zeros(1), objective=lambda x: float((x[0] - 3.0) ** 2))
    res = solve_nlp(prob, tol=1e-8)
    assert res.status == "solved"
    assert abs(res.x[0] - 3.0) < 1e-6


def test_bound_constrained_scalar():
    prob = NlpProblem(n=1, x0=np.array([2.0]), objective=lambda x: float(x[0] ** 2),
                      lower=np.array([1.0]))
    res = solve_nlp(prob, tol=1e-8)
    assert res.status == "solved"
    assert abs(res.x[0] - 1.0) < 1e-8


def test_rosenbrock_in_box():
    def rosen(x):
        return float((1 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)

    prob = NlpProblem(n=2, x0=np.array([-1.5, 1.5]), objective=rosen,
                      lower=np.full(2, -2.0), upper=np.full(2, 2.0))
    res = solve_nlp(prob, tol=1e-10, max_iter=300)
    assert np.abs(res.x - 1.0).max() < 1e-6


def test_equality_constrained_projection():
    # min ||x||^2 s.t. x0 + x1 = 2 -> (1, 1)
    prob = NlpProblem(
        n=2,
        x0=np.array([2.0, 0.0]),
        least_squares=LeastSquares(residual=lambda x: x, jacobian=lambda x: np.eye(2)),
        equality=EqualityConstraints(fun=lambda x: np.array([x[0] + x[1] - 2.0]),
                                     jacobian=lambda x: np.array([[1.0, 1.0]])),
    )
    res = solve_nlp(prob, tol=1e-9)
    assert res.status == "solved"
    assert np.abs(res.x - 1.0).max() < 1e-7


def test_matches_qp_solver_on_convex_qp():
    # least-squares NLP == QP; both engines must agree
    L = RNG.normal(size=(6, 4))
    b = RNG.normal(size=6)
    lb, ub = np.full(4, -0.3), np.full(4, 0.3)
    prob = NlpProblem(
        n=4, x0=np.zeros(4),
        least_squares=LeastSquares(residual=lambda x: L @ x - b, jacobian=lambda x: L),
        lower=lb, upper=ub,
    )
    res = solve_nlp(prob, tol=1e-10)
    qp = QpProblem(2 * L.T @ L, -2 * L.T @ b, np.eye(4), lb, ub)
    sol = QpSolver().solve(qp)
    assert res.status == "solved" and sol.status == "solved"
    assert np.abs(res.x - sol.x).max() < 1e-6


def test_merit_non_increasing():
    def rosen(x):
        return float((1 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)

    prob = NlpProblem(n=2, x0=np.array([-1.2, 1.0]), objective=rosen,
                      lower=np.full(2, -2.0), upper=np.full(2, 2.0))
    res = solve_nlp(prob, tol=1e-10, max_iter=300)
    hist = np.array(res.merit_history)
    assert np.all(np.diff(hist) <= 1e-10)


def test_initial_guess_outside_bounds_rejected():
    with pytest.raises(ValueError):
        NlpProblem(n=1, x0=np.array([5.0]), objective=lambda x: 0.0,
                   upper=np.array([1.0]))

"""Quaternion kernel checks: conventions, orthogonality, kinematic consistency."""

import numpy as np
import pytest

from lqmhpe.attitude import (
    IDENTITY_QUAT,
    attitude_jacobian,
    hat,
    normalize,
    random_unit_quaternion,
    rotation_matrix,
)

RNG = np.random.default_rng(20240817)


def test_rotation_identity_quaternion():
    assert np.allclose(rotation_matrix(IDENTITY_QUAT), np.eye(3), atol=1e-15)


def test_rotation_half_turn_yaw():
    # 180 degree yaw: x and y flip, z stays
    assert np.allclose(
        rotation_matrix(np.array([0.0, 0.0, 0.0, 1.0])), np.diag([-1.0, -1.0, 1.0]), atol=1e-15
    )


def test_rotation_orthonormality_random():
    for _ in range(10_000):
        q = random_unit_quaternion(RNG)
        rot = rotation_matrix(q)
        assert np.abs(rot @ rot.T - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(rotation_matrix(random_unit_quaternion(RNG))) - 1.0) < 1e-12


def test_rotation_double_cover():
    for _ in range(100):
        q = random_unit_quaternion(RNG)
        assert np.abs(rotation_matrix(q) - rotation_matrix(-q)).max() < 1e-12


def test_attitude_jacobian_pure_yaw_at_identity():
    qdot = 0.5 * attitude_jacobian(IDENTITY_QUAT) @ np.array([0.0, 0.0, 1.0])
    assert np.allclose(qdot, [0.0, 0.0, 0.0, 0.5], atol=1e-15)


def test_attitude_jacobian_orthogonal_to_q():
    for _ in range(10_000):
        q = random_unit_quaternion(RNG)
        assert np.abs(q @ attitude_jacobian(q)).max() < 1e-12


def test_attitude_jacobian_full_yaw_rotation():
    # Euler-integrate qdot = 0.5 G(q) w at 2*pi rad/s for one second: the
    # attitude must return to +/- identity.
    q = IDENTITY_QUAT.copy()
    omega = np.array([0.0, 0.0, 2.0 * np.pi])
    dt = 1e-4
    for _ in range(10_000):
        q = normalize(q + dt * 0.5 * attitude_jacobian(q) @ omega)
    err = min(np.abs(q - IDENTITY_QUAT).max(), np.abs(q + IDENTITY_QUAT).max())
    assert err < 1e-2


def test_hat_zero():
    assert np.all(hat(np.zeros(3)) == 0.0)


def test_hat_right_hand_rule():
    assert np.allclose(hat(np.array([1.0, 0, 0])) @ np.array([0.0, 1, 0]), [0, 0, 1])


def test_hat_matches_cross_product():
    for _ in range(1000):
        v, u = RNG.normal(size=3), RNG.normal(size=3)
        assert np.abs(hat(v) @ u - np.cross(v, u)).max() < 1e-15


def test_hat_skew_symmetric_exactly():
    for _ in range(100):
        v = RNG.normal(size=3)
        assert np.all(hat(v) + hat(v).T == 0.0)


def test_normalize_unit_result():
    q = normalize(np.array([2.0, -1.0, 0.5, 0.25]))
    assert abs(q @ q - 1.0) < 1e-12


def test_normalize_zero_rejected():
    with pytest.raises(ValueError):
        normalize(np.zeros(4))

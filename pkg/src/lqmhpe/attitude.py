"""Quaternion and SO(3) kernels shared by the dynamics and estimation code.

Conventions: scalar-first quaternions (w, x, y, z), Hamilton product,
rotation_matrix(q) maps body-frame vectors into the inertial frame.
All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# Renormalize whenever the norm drifts further than this from 1.
NORM_DRIFT_TOL = 1e-12


def normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm (no-op copy when already within tolerance)."""
    n = float(np.sqrt(q @ q))
    if abs(n - 1.0) <= NORM_DRIFT_TOL:
        return np.array(q, dtype=float)
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return np.asarray(q, dtype=float) / n


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-inertial rotation matrix of a unit quaternion.

    Even in q, so q and -q give the same rotation. The caller guarantees
    normalization; a debug assertion checks it.
    """
    assert abs(q @ q - 1.0) < 2e-9, "rotation_matrix expects a unit quaternion"
    w, x, y, z = q
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )


def attitude_jacobian(q: np.ndarray) -> np.ndarray:
    """4x3 matrix G(q) with qdot = 0.5 * G(q) @ omega for body rates omega.

    Columns are orthogonal to q, so the kinematics preserve the norm.
    """
    w, x, y, z = q
    return np.array(
        [
            [-x, -y, -z],
            [w, -z, y],
            [z, w, -x],
            [-y, x, w],
        ]
    )


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of v: hat(v) @ u == cross(v, u)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def random_unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform sample on the unit 3-sphere (normalized 4-d Gaussian)."""
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)

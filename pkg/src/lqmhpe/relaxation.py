"""Affine-in-parameter lifted multirotor model.

The physical parameters enter the nonlinear dynamics through products and
quotients; dividing them out into lifted coordinates yields dynamics of the
form xdot = F(x) + G(x, u) @ vt that are exactly equivalent to the nominal
model (a re-parameterization, not an approximation) but affine in the lifted
vector vt. Interval bounds on the physical parameters transform into sound
interval bounds on the lifted ones by corner enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import ad
from .attitude import attitude_jacobian, hat, normalize, rotation_matrix
from .dynamics import (
    GRAVITY_W,
    NX,
    Q,
    V,
    W,
    InvalidParameterError,
    NominalParams,
    State,
    alternating_signs,
    rk4_flat,
)


@dataclass
class RelaxedParams:
    """Lifted parameters, same dimension 7 + 3m as the physical vector.

    inv_mass = 1/mass; drag_rel = drag/mass; vert_rel = d/Ixx;
    horiz_rel = c/Iyy; torque_rel = b/Izz; inertia ratios
    ((Izz-Iyy)/Ixx, (Ixx-Izz)/Iyy, (Iyy-Ixx)/Izz).
    """

    inv_mass: float
    drag_rel: np.ndarray
    vert_rel: np.ndarray
    horiz_rel: np.ndarray
    torque_rel: np.ndarray
    inertia_ratios: np.ndarray

    def __post_init__(self):
        self.drag_rel = np.asarray(self.drag_rel, dtype=float)
        self.vert_rel = np.asarray(self.vert_rel, dtype=float)
        self.horiz_rel = np.asarray(self.horiz_rel, dtype=float)
        self.torque_rel = np.asarray(self.torque_rel, dtype=float)
        self.inertia_ratios = np.asarray(self.inertia_ratios, dtype=float)
        if self.inv_mass <= 0.0:
            raise InvalidParameterError(f"1/mass must be positive, got {self.inv_mass}")

    @property
    def n_rotors(self) -> int:
        return len(self.vert_rel)

    def vector(self) -> np.ndarray:
        """Flatten as [1/mu, a/mu, d/Ixx, c/Iyy, b/Izz, inertia ratios]."""
        return np.concatenate(
            [
                [self.inv_mass],
                self.drag_rel,
                self.vert_rel,
                self.horiz_rel,
                self.torque_rel,
                self.inertia_ratios,
            ]
        )

    @classmethod
    def from_vector(cls, vt: np.ndarray) -> "RelaxedParams":
        vt = np.asarray(vt, dtype=float)
        m = (vt.size - 7) // 3
        return cls(
            inv_mass=float(vt[0]),
            drag_rel=vt[1:4],
            vert_rel=vt[4 : 4 + m],
            horiz_rel=vt[4 + m : 4 + 2 * m],
            torque_rel=vt[4 + 2 * m : 4 + 3 * m],
            inertia_ratios=vt[4 + 3 * m :],
        )


def relax(params: NominalParams) -> RelaxedParams:
    """Change of variables from physical to lifted parameters."""
    ixx, iyy, izz = params.inertia
    return RelaxedParams(
        inv_mass=1.0 / params.mass,
        drag_rel=params.drag / params.mass,
        vert_rel=params.d / ixx,
        horiz_rel=params.c / iyy,
        torque_rel=params.b / izz,
        inertia_ratios=np.array([(izz - iyy) / ixx, (ixx - izz) / iyy, (iyy - ixx) / izz]),
    )


def relax_batch(thetas: np.ndarray) -> np.ndarray:
    """Vectorized change of variables for (N, 7+3m) physical vectors."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    m = (thetas.shape[1] - 7) // 3
    mass = thetas[:, 0:1]
    ixx, iyy, izz = thetas[:, 1:2], thetas[:, 2:3], thetas[:, 3:4]
    out = np.empty_like(thetas)
    out[:, 0:1] = 1.0 / mass
    out[:, 1:4] = thetas[:, 4:7] / mass
    out[:, 4 : 4 + m] = thetas[:, 7 + 2 * m : 7 + 3 * m] / ixx
    out[:, 4 + m : 4 + 2 * m] = thetas[:, 7 + m : 7 + 2 * m] / iyy
    out[:, 4 + 2 * m : 4 + 3 * m] = thetas[:, 7 : 7 + m] / izz
    out[:, 4 + 3 * m + 0] = ((izz - iyy) / ixx).ravel()
    out[:, 4 + 3 * m + 1] = ((ixx - izz) / iyy).ravel()
    out[:, 4 + 3 * m + 2] = ((iyy - ixx) / izz).ravel()
    return out


# -- drift / input split -------------------------------------------------------


def drift(x: State, gravity: np.ndarray = GRAVITY_W) -> np.ndarray:
    """F(x): the parameter-free part of the dynamics; angular rows are zero."""
    rot = rotation_matrix(x.quat)
    return np.concatenate(
        [
            rot @ x.vel,
            0.5 * attitude_jacobian(x.quat) @ x.ang_vel,
            rot.T @ gravity - hat(x.ang_vel) @ x.vel,
            np.zeros(3),
        ]
    )


def input_matrix(x: State, u: np.ndarray) -> np.ndarray:
    """G(x, u): the 13 x (7+3m) matrix multiplying the lifted parameters."""
    u = np.asarray(u, dtype=float)
    m = u.size
    g_mat = np.zeros((NX, 7 + 3 * m))
    ku = np.array([0.0, 0.0, float(u.sum())])
    g_mat[V, 0] = ku
    g_mat[V, 1:4] = -np.diag(x.vel)
    # rows of the B(u) block: u^T on d/Ixx, -u^T on c/Iyy, alternating on b/Izz
    g_mat[10, 4 : 4 + m] = u
    g_mat[11, 4 + m : 4 + 2 * m] = -u
    g_mat[12, 4 + 2 * m : 4 + 3 * m] = alternating_signs(m) * u
    wx, wy, wz = x.ang_vel
    g_mat[W, 4 + 3 * m :] = -np.diag([wy * wz, wx * wz, wx * wy])
    return g_mat


def drift_batch(xs: np.ndarray, gravity: np.ndarray = GRAVITY_W) -> np.ndarray:
    """F(x) for a batch of flat states, shape (L, 13)."""
    from .dynamics import _quat_rate, _quat_rotate, _quat_rotate_conj

    q, v, w = xs[..., Q], xs[..., V], xs[..., W]
    return np.concatenate(
        [
            _quat_rotate(q, v),
            _quat_rate(q, w),
            _quat_rotate_conj(q, gravity) - ad.cross(w, v),
            np.zeros(xs.shape[:-1] + (3,)),
        ],
        axis=-1,
    )


def input_matrix_batch(xs: np.ndarray, us: np.ndarray) -> np.ndarray:
    """G(x, u) for a batch of flat states/inputs, shape (L, 13, 7+3m)."""
    L, m = us.shape
    g = np.zeros((L, NX, 7 + 3 * m))
    g[:, 9, 0] = us.sum(axis=1)
    idx = np.arange(3)
    g[:, 7 + idx, 1 + idx] = -xs[:, V]
    g[:, 10, 4 : 4 + m] = us
    g[:, 11, 4 + m : 4 + 2 * m] = -us
    g[:, 12, 4 + 2 * m : 4 + 3 * m] = alternating_signs(m)[None, :] * us
    w = xs[:, W]
    g[:, 10 + idx, 4 + 3 * m + idx] = -np.stack(
        [w[:, 1] * w[:, 2], w[:, 0] * w[:, 2], w[:, 0] * w[:, 1]], axis=1
    )
    return g


def rhs_relaxed(x, u, vt, gravity=GRAVITY_W):
    """F(x) + G(x, u) @ vt evaluated directly; jet-generic and batched.

    Same signature shape as `dynamics.rhs_nominal`, with the lifted parameter
    vector in place of the physical one.
    """
    from .dynamics import _quat_rate, _quat_rotate, _quat_rotate_conj  # shared kernels

    nu = (np.shape(ad.value(vt))[-1] - 7) // 3
    q, v, w = x[..., Q], x[..., V], x[..., W]
    inv_mass = vt[..., 0:1]
    drag_rel = vt[..., 1:4]
    vert_rel = vt[..., 4 : 4 + nu]
    horiz_rel = vt[..., 4 + nu : 4 + 2 * nu]
    torque_rel = vt[..., 4 + 2 * nu : 4 + 3 * nu]
    ratios = vt[..., 4 + 3 * nu :]
    alt = alternating_signs(nu)

    thrust = ad.jsum(u)
    zeros2 = np.zeros(np.shape(ad.value(thrust))[:-1] + (2,))
    ku = ad.concat([zeros2, thrust])

    p_dot = _quat_rotate(q, v)
    q_dot = _quat_rate(q, w)
    v_dot = _quat_rotate_conj(q, gravity) - ad.cross(w, v) + ku * inv_mass - v * drag_rel
    torque = ad.concat([ad.vdot(vert_rel, u), -ad.vdot(horiz_rel, u), ad.vdot(torque_rel, alt * u)])
    w1, w2, w3 = w[..., 0:1], w[..., 1:2], w[..., 2:3]
    coupling = ad.concat([w2 * w3, w1 * w3, w1 * w2])
    w_dot = torque - ratios * coupling
    return ad.concat([p_dot, q_dot, v_dot, w_dot])


def affine_euler_step(
    x: State,
    u: np.ndarray,
    rel: RelaxedParams,
    w: np.ndarray | None = None,
    dt: float = 0.02,
    gravity: np.ndarray = GRAVITY_W,
) -> State:
    """x + dt*(F + G vt + w), then quaternion renormalization.

    The pre-normalization update is affine in vt for fixed (x, u, w).
    dt = 0 returns x unchanged.
    """
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    xv = x.vector()
    rate = rhs_relaxed(xv, np.asarray(u, dtype=float), rel.vector(), gravity)
    if w is not None:
        rate = rate + np.asarray(w, dtype=float)
    x_next = xv + dt * rate
    x_next[Q] = normalize(x_next[Q])
    return State.from_vector(x_next)


def rk4_step_relaxed(
    x: State, u: np.ndarray, rel: RelaxedParams, dt: float, gravity: np.ndarray = GRAVITY_W
) -> State:
    """RK4 over the lifted-form dynamics (nonlinear in x, used by NMPC)."""
    x_next = rk4_flat(
        x.vector(), np.asarray(u, dtype=float), rel.vector(), dt, rhs=rhs_relaxed, gravity=gravity
    )
    return State.from_vector(x_next)


# -- parameter boxes -----------------------------------------------------------


@dataclass
class ParamBox:
    """Componentwise interval box in either parameter space."""

    lower: np.ndarray
    upper: np.ndarray
    space: str = "nominal"  # "nominal" (physical theta) or "relaxed"

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have identical shapes")
        if np.any(self.lower > self.upper):
            raise ValueError("box has lower > upper after normalization")

    def contains(self, vec: np.ndarray, tol: float = 0.0) -> bool:
        vec = np.asarray(vec, dtype=float)
        return bool(np.all(vec >= self.lower - tol) and np.all(vec <= self.upper + tol))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


def box_from_factors(params: NominalParams, lo: float = 0.5, hi: float = 1.5) -> ParamBox:
    """Scale-factor uncertainty box around nominal parameters.

    Built as [min(lo*t, hi*t), max(lo*t, hi*t)] per component, since plain
    lo*t/hi*t would invert for negative nominal entries (rotor geometry).
    """
    theta = params.vector()
    a, b = lo * theta, hi * theta
    return ParamBox(np.minimum(a, b), np.maximum(a, b), space="nominal")


def _ratio_corners(num_lo, num_hi, den_lo, den_hi):
    corners = [n / d for n in (num_lo, num_hi) for d in (den_lo, den_hi)]
    return min(corners), max(corners)


def transform_bounds(box: ParamBox, n_rotors: int = 4) -> ParamBox:
    """Map a physical-parameter box to a sound lifted-parameter box.

    Each lifted component is a ratio of box-bounded quantities with a strictly
    positive denominator, so its exact range over the box is attained on the
    corner set of the constituent intervals (including the 8 corners of the
    inertia triple, whose numerators can change sign inside the box).
    """
    if box.space != "nominal":
        raise ValueError("transform_bounds expects a physical-parameter box")
    m = n_rotors
    lo, hi = box.lower, box.upper
    if lo[0] <= 0.0 or np.any(lo[1:4] <= 0.0):
        raise ValueError("mass/inertia lower bounds must be strictly positive")

    out_lo = np.empty(7 + 3 * m)
    out_hi = np.empty(7 + 3 * m)
    # 1/mass
    out_lo[0], out_hi[0] = 1.0 / hi[0], 1.0 / lo[0]
    # drag/mass
    for i in range(3):
        out_lo[1 + i], out_hi[1 + i] = _ratio_corners(lo[4 + i], hi[4 + i], lo[0], hi[0])
    # d/Ixx, c/Iyy, b/Izz
    for i in range(m):
        out_lo[4 + i], out_hi[4 + i] = _ratio_corners(
            lo[7 + 2 * m + i], hi[7 + 2 * m + i], lo[1], hi[1]
        )
        out_lo[4 + m + i], out_hi[4 + m + i] = _ratio_corners(
            lo[7 + m + i], hi[7 + m + i], lo[2], hi[2]
        )
        out_lo[4 + 2 * m + i], out_hi[4 + 2 * m + i] = _ratio_corners(
            lo[7 + i], hi[7 + i], lo[3], hi[3]
        )
    # inertia ratios over the 8 corners of (Ixx, Iyy, Izz)
    corners = np.array(list(product((lo[1], hi[1]), (lo[2], hi[2]), (lo[3], hi[3]))))
    ixx, iyy, izz = corners[:, 0], corners[:, 1], corners[:, 2]
    ratios = np.stack([(izz - iyy) / ixx, (ixx - izz) / iyy, (iyy - ixx) / izz], axis=1)
    out_lo[4 + 3 * m :] = ratios.min(axis=0)
    out_hi[4 + 3 * m :] = ratios.max(axis=0)
    return ParamBox(out_lo, out_hi, space="relaxed")

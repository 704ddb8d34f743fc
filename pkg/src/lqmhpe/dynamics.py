"""Nonlinear multirotor rigid-body dynamics: ground truth model and integrators.

State is 13-dimensional, flattened in the order (position, quaternion,
body-frame linear velocity, body-frame angular velocity). The right-hand side
is written against the jet-generic helpers in `ad`, so the same code produces
simulation steps (plain arrays) and exact Jacobians (jets), batched over
leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ad
from .attitude import IDENTITY_QUAT, normalize

GRAVITY_W = np.array([0.0, 0.0, -9.81])

# Flat-state slices: (p, q, v, omega).
P = slice(0, 3)
Q = slice(3, 7)
V = slice(7, 10)
W = slice(10, 13)
NX = 13


class InvalidParameterError(ValueError):
    """Raised for physically impossible parameters (non-positive mass/inertia)."""


@dataclass
class NominalParams:
    """Physical multirotor parameters, 7 + 3m entries for m rotors.

    mass [kg]; inertia = (Ixx, Iyy, Izz) [kg m^2]; drag = (Axx, Ayy, Azz)
    [kg/s]; b = yaw torque-to-thrust ratios [-]; c = body-frame horizontal
    rotor positions [m]; d = body-frame vertical rotor positions [m].
    """

    mass: float
    inertia: np.ndarray
    drag: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.drag = np.asarray(self.drag, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        if self.mass <= 0.0:
            raise InvalidParameterError(f"mass must be positive, got {self.mass}")
        if np.any(self.inertia <= 0.0):
            raise InvalidParameterError(f"inertias must be positive, got {self.inertia}")
        if np.any(self.drag < 0.0):
            raise InvalidParameterError(f"drag coefficients must be >= 0, got {self.drag}")
        if not (len(self.b) == len(self.c) == len(self.d)):
            raise InvalidParameterError("b, c, d must have one entry per rotor")

    @property
    def n_rotors(self) -> int:
        return len(self.b)

    def vector(self) -> np.ndarray:
        """Flatten as [mass, inertia, drag, b, c, d]."""
        return np.concatenate(
            [[self.mass], self.inertia, self.drag, self.b, self.c, self.d]
        )

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "NominalParams":
        theta = np.asarray(theta, dtype=float)
        m = (theta.size - 7) // 3
        return cls(
            mass=float(theta[0]),
            inertia=theta[1:4],
            drag=theta[4:7],
            b=theta[7 : 7 + m],
            c=theta[7 + m : 7 + 2 * m],
            d=theta[7 + 2 * m : 7 + 3 * m],
        )


@dataclass
class State:
    """Multirotor state: inertial position, attitude quaternion, body velocities."""

    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray
    ang_vel: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.quat = np.asarray(self.quat, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        self.ang_vel = np.asarray(self.ang_vel, dtype=float)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.quat, self.vel, self.ang_vel])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        return cls(x[P].copy(), x[Q].copy(), x[V].copy(), x[W].copy())

    @classmethod
    def hover(cls) -> "State":
        return cls(np.zeros(3), IDENTITY_QUAT.copy(), np.zeros(3), np.zeros(3))


@dataclass
class ModelSpec:
    """A parameter set bundled with the simulation constants that frame it."""

    name: str
    params: NominalParams
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY_W.copy())
    u_max: float = 0.0  # per-rotor thrust ceiling [N]; 0 -> 2.5x hover default

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.u_max <= 0.0:
            self.u_max = 2.5 * self.hover_thrust()

    def hover_thrust(self) -> float:
        """Per-rotor thrust balancing gravity at identity attitude."""
        return self.params.mass * float(np.linalg.norm(self.gravity)) / self.params.n_rotors


# -- jet-generic right-hand side ----------------------------------------------


def _quat_rotate(q, v):
    # body -> world: v + 2w(qv x v) + 2 qv x (qv x v)
    qw, qv = q[..., 0:1], q[..., 1:4]
    t = ad.cross(qv, v) * 2.0
    return v + qw * t + ad.cross(qv, t)


def _quat_rotate_conj(q, v):
    # world -> body (rotation by the conjugate quaternion)
    qw, qv = q[..., 0:1], q[..., 1:4]
    t = ad.cross(qv, v) * 2.0
    return v - qw * t + ad.cross(qv, t)


def _quat_rate(q, w):
    # qdot = 0.5 [-qv . w ; qw w + qv x w], identical to 0.5 G(q) w
    qw, qv = q[..., 0:1], q[..., 1:4]
    return ad.concat([ad.vdot(qv, w) * (-0.5), (qw * w + ad.cross(qv, w)) * 0.5])


def alternating_signs(m: int) -> np.ndarray:
    """(-1, +1, -1, ...) — the yaw-torque sign pattern of the rotor layout."""
    return np.array([-1.0 if i % 2 == 0 else 1.0 for i in range(m)])


def rhs_nominal(x, u, theta, gravity=GRAVITY_W):
    """Continuous-time state derivative, nonlinear in the physical parameters.

    x: (..., 13), u: (..., m), theta: (..., 7+3m) flattened NominalParams.
    Any argument may be an `ad.Jet`.
    """
    nu = (np.shape(ad.value(theta))[-1] - 7) // 3
    q, v, w = x[..., Q], x[..., V], x[..., W]
    mass = theta[..., 0:1]
    inertia = theta[..., 1:4]
    drag = theta[..., 4:7]
    b = theta[..., 7 : 7 + nu]
    c = theta[..., 7 + nu : 7 + 2 * nu]
    d = theta[..., 7 + 2 * nu : 7 + 3 * nu]
    alt = alternating_signs(nu)

    thrust = ad.jsum(u)  # K u, third row of K is all ones
    zeros2 = np.zeros(np.shape(ad.value(thrust))[:-1] + (2,))
    ku = ad.concat([zeros2, thrust])

    p_dot = _quat_rotate(q, v)
    q_dot = _quat_rate(q, w)
    v_dot = _quat_rotate_conj(q, gravity) + (ku - drag * v) / mass - ad.cross(w, v)
    torque = ad.concat([ad.vdot(d, u), -ad.vdot(c, u), ad.vdot(b, alt * u)])
    w_dot = (torque - ad.cross(w, inertia * w)) / inertia
    return ad.concat([p_dot, q_dot, v_dot, w_dot])


def _renormalized(x_next):
    q = x_next[..., Q]
    unit_q = q / ad.sqrt(ad.vdot(q, q))
    return ad.concat([x_next[..., P], unit_q, x_next[..., V], x_next[..., W]])


def rk4_flat(x, u, p, dt, rhs=rhs_nominal, gravity=GRAVITY_W):
    """Classic RK4 step of `rhs`, followed by quaternion renormalization."""
    k1 = rhs(x, u, p, gravity)
    k2 = rhs(x + k1 * (0.5 * dt), u, p, gravity)
    k3 = rhs(x + k2 * (0.5 * dt), u, p, gravity)
    k4 = rhs(x + k3 * dt, u, p, gravity)
    x_next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    return _renormalized(x_next)


def euler_flat(x, u, p, dt, rhs=rhs_nominal, gravity=GRAVITY_W):
    """Forward Euler step of `rhs`, followed by quaternion renormalization."""
    return _renormalized(x + rhs(x, u, p, gravity) * dt)


# -- public state-typed operations ---------------------------------------------


def derivative(
    x: State, u: np.ndarray, params: NominalParams, gravity: np.ndarray = GRAVITY_W
) -> np.ndarray:
    """f(x, u, theta): the 13-vector continuous-time derivative."""
    return rhs_nominal(x.vector(), np.asarray(u, dtype=float), params.vector(), gravity)


def rk4_step(
    x: State, u: np.ndarray, params: NominalParams, dt: float, gravity: np.ndarray = GRAVITY_W
) -> State:
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_next = rk4_flat(x.vector(), np.asarray(u, dtype=float), params.vector(), dt, gravity=gravity)
    return State.from_vector(x_next)


def euler_step(
    x: State, u: np.ndarray, params: NominalParams, dt: float, gravity: np.ndarray = GRAVITY_W
) -> State:
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_next = euler_flat(x.vector(), np.asarray(u, dtype=float), params.vector(), dt, gravity=gravity)
    return State.from_vector(x_next)


def add_disturbance(x: State, w: np.ndarray, channels: str = "pvw") -> State:
    """Additive state disturbance.

    channels="pvw" perturbs position and the two velocity blocks only;
    channels="full" also perturbs the quaternion and renormalizes it.
    """
    w = np.asarray(w, dtype=float)
    x_new = x.vector()
    if channels == "pvw":
        x_new[P] += w[P]
        x_new[V] += w[V]
        x_new[W] += w[W]
    elif channels == "full":
        x_new += w
        x_new[Q] = normalize(x_new[Q])
    else:
        raise ValueError(f"unknown disturbance channels {channels!r}")
    return State.from_vector(x_new)

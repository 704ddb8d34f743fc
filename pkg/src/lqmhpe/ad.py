"""Forward-mode automatic differentiation on numpy arrays, plus finite differences.

The `Jet` type carries a value array of shape S together with a tangent array
of shape S + (K,) holding K directional derivatives. Arithmetic is overloaded
so that code written with the helper functions below (`cross`, `vdot`,
`concat`, `sqrt`) runs unchanged on plain ndarrays (fast simulation path) and
on jets (derivative path). Leading batch axes broadcast, which is what lets a
whole shooting horizon be differentiated in one call.

Only the operations the multirotor dynamics need are implemented; the model is
polynomial/rational apart from the quaternion renormalization square root.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Jet:
    """Value + K directional derivatives (tangent axis last)."""

    __slots__ = ("v", "d")
    __array_priority__ = 100  # keep numpy from absorbing us in mixed ops

    def __init__(self, value: np.ndarray, tangent: np.ndarray):
        self.v = value
        self.d = tangent

    @property
    def shape(self):
        return self.v.shape

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.v + other.v, self.d + other.d)
        return Jet(self.v + other, self.d)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.v - other.v, self.d - other.d)
        return Jet(self.v - other, self.d)

    def __rsub__(self, other):
        return Jet(other - self.v, -self.d)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.v * other.v,
                self.d * other.v[..., None] + other.d * self.v[..., None],
            )
        other = np.asarray(other)
        return Jet(self.v * other, self.d * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            inv = 1.0 / other.v
            val = self.v * inv
            return Jet(val, (self.d - val[..., None] * other.d) * inv[..., None])
        other = np.asarray(other)
        return Jet(self.v / other, self.d / other[..., None])

    def __rtruediv__(self, other):
        inv = 1.0 / self.v
        val = other * inv
        return Jet(val, -val[..., None] * self.d * inv[..., None])

    def __neg__(self):
        return Jet(-self.v, -self.d)

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 2:
            raise ValueError("Jet.__pow__ supports integer exponents >= 2")
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.v[idx], self.d[idx + (slice(None),)])


def value(x):
    """Underlying value array of a Jet (identity for plain arrays)."""
    return x.v if isinstance(x, Jet) else x


def seed(x: np.ndarray, total: int, offset: int = 0) -> Jet:
    """Jet for x with identity tangents in directions [offset, offset+n).

    x may have leading batch axes; the identity block is placed along the last
    value axis for every batch element.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    d = np.zeros(x.shape + (total,))
    idx = np.arange(n)
    d[..., idx, offset + idx] = 1.0
    return Jet(x, d)


def _lift(x, like: Jet) -> Jet:
    if isinstance(x, Jet):
        return x
    x = np.asarray(x, dtype=float)
    k = like.d.shape[-1]
    return Jet(x, np.zeros(x.shape + (k,)))


# -- elementwise / structural helpers (Jet- and ndarray-generic) -------------


def sqrt(x):
    if isinstance(x, Jet):
        root = np.sqrt(x.v)
        return Jet(root, x.d * (0.5 / root)[..., None])
    return np.sqrt(x)


def vdot(a, b):
    """Dot product over the last value axis, keepdims (shape (..., 1))."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        prod = a * b if isinstance(a, Jet) else b * a
        return Jet(prod.v.sum(axis=-1, keepdims=True), prod.d.sum(axis=-2, keepdims=True))
    return (a * b).sum(axis=-1, keepdims=True)


def cross(a, b):
    """Cross product of (..., 3) vectors (hand-rolled: np.cross has high
    per-call overhead on small batches)."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        out = np.empty(np.broadcast_shapes(a.shape, b.shape))
        out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
        out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
        out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        return out
    a1, a2, a3 = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    b1, b2, b3 = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return concat([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])


def concat(parts: Sequence) -> "Jet | np.ndarray":
    """Concatenate along the last value axis, lifting plain parts if needed."""
    jets = [p for p in parts if isinstance(p, Jet)]
    if not jets:
        return np.concatenate(parts, axis=-1)
    like = jets[0]
    lifted = [_lift(p, like) for p in parts]
    return Jet(
        np.concatenate([p.v for p in lifted], axis=-1),
        np.concatenate([p.d for p in lifted], axis=-2),
    )


def jsum(x, axis=-1):
    """Sum over one value axis with keepdims."""
    if isinstance(x, Jet):
        ax = axis if axis >= 0 else x.v.ndim + axis
        return Jet(x.v.sum(axis=ax, keepdims=True), x.d.sum(axis=ax, keepdims=True))
    return x.sum(axis=axis, keepdims=True)


# -- Jacobians ----------------------------------------------------------------


def jacobian(f: Callable, x: np.ndarray) -> np.ndarray:
    """Forward-mode Jacobian of a jet-generic vector function at x (1-D)."""
    x = np.asarray(x, dtype=float)
    out = f(seed(x, x.size))
    if not isinstance(out, Jet):
        raise TypeError("function did not propagate jets; use finite differences")
    return out.d


def fd_jacobian(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-component steps h*max(|x_i|, 1e-3)."""
    x = np.asarray(x, dtype=float)
    steps = h * np.maximum(np.abs(x), 1e-3)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        cols.append((f(x + e) - f(x - e)) / (2.0 * steps[i]))
    return np.stack(cols, axis=-1)


class DerivativeProvider:
    """Jacobian evaluation in one of two modes: dual-number forward AD or
    central finite differences.

    AD mode requires the target function to be written against the helpers in
    this module; FD mode works on any black-box function. `check` measures the
    agreement of both modes (matrix-level relative error), which the test
    suites pin at 1e-5.
    """

    def __init__(self, mode: str = "ad", fd_step: float = 1e-6):
        if mode not in ("ad", "fd"):
            raise ValueError(f"unknown derivative mode {mode!r}")
        self.mode = mode
        self.fd_step = fd_step

    def jacobian(self, f: Callable, x: np.ndarray) -> np.ndarray:
        if self.mode == "ad":
            return jacobian(f, x)
        return fd_jacobian(f, x, self.fd_step)

    def gradient(self, f: Callable, x: np.ndarray) -> np.ndarray:
        jac = self.jacobian(lambda z: _as_vector(f, z), x)
        return jac.reshape(-1)

    def check(self, f: Callable, x: np.ndarray) -> float:
        """Relative disagreement between AD and FD Jacobians at x."""
        j_ad = jacobian(f, x)
        j_fd = fd_jacobian(f, x, self.fd_step)
        scale = max(1.0, float(np.abs(j_fd).max()))
        return float(np.abs(j_ad - j_fd).max()) / scale


def _as_vector(f, z):
    out = f(z)
    if isinstance(out, Jet):
        return Jet(np.atleast_1d(out.v), out.d.reshape((1, -1)) if out.v.ndim == 0 else out.d)
    return np.atleast_1d(out)

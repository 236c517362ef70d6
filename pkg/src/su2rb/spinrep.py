"""Spin-j representation machinery and exact SU(2) group arithmetic.

Operators are dense ``(2j+1, 2j+1)`` complex arrays with rows and columns
ordered by descending magnetic label ``l = j, j-1, ..., -j``.

Group elements are unit quaternions ``(w, x, y, z)`` standing for the
spin-1/2 matrix ``w*I - i*(x*sx + y*sy + z*sz)``, so composition is the
Hamilton product and the spin-j matrix of an element is a true (not merely
projective) representation, even for half-integer j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .wigner import AxisAngle, DomainError, EulerAngles, _cg2, _sixj2, _small_d_twice, twice

__all__ = [
    "GroupElement", "IDENTITY", "angular_momentum", "spherical_tensor", "tensor_labels",
    "rotation_matrix", "rotation_matrices", "compose", "inverse", "haar_sample",
    "haar_quaternions", "quaternions_from_euler", "euler_to_axis_angle",
    "axis_angle_to_euler", "spin_rotation", "tensor_product_expansion", "trace_product",
    "quat_multiply",
]

TWO_PI = 2 * math.pi


def quat_multiply(a, b):
    """Hamilton product of quaternion arrays with trailing dimension 4."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def _wrap(angle) -> float:
    """Reduce to [0, 2pi); a tiny negative input would otherwise round to 2pi."""
    a = float(angle) % TWO_PI
    return 0.0 if a >= TWO_PI else a


def _normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


@dataclass(frozen=True)
class GroupElement:
    """An SU(2) element held as a unit quaternion (w, x, y, z)."""

    quaternion: tuple

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=float)
        q = q / np.linalg.norm(q)
        object.__setattr__(self, "quaternion", tuple(float(v) for v in q))

    @property
    def q(self) -> np.ndarray:
        return np.array(self.quaternion)

    @classmethod
    def from_euler(cls, e: EulerAngles) -> "GroupElement":
        return cls(tuple(quaternions_from_euler(e.alpha, e.beta, e.gamma)))

    @classmethod
    def from_axis_angle(cls, theta: float, axis) -> "GroupElement":
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        s = math.sin(theta / 2)
        return cls((math.cos(theta / 2), s * n[0], s * n[1], s * n[2]))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    @cached_property
    def su2(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        return np.array([[w - 1j * z, -1j * x - y], [-1j * x + y, w + 1j * z]])

    @cached_property
    def rotation_angle(self) -> float:
        """Angle in [0, 2pi] of the SU(2) element (sign-sensitive)."""
        w, x, y, z = self.quaternion
        return 2 * math.atan2(math.sqrt(x * x + y * y + z * z), w)

    @cached_property
    def euler(self) -> EulerAngles:
        a, b, g = _euler_raw(self.q)
        return EulerAngles(_wrap(a), float(b), _wrap(g))

    @cached_property
    def axis_angle(self) -> AxisAngle:
        q = self.q
        if q[0] < 0:
            q = -q
        v = q[1:]
        nv = np.linalg.norm(v)
        if nv < 1e-300:
            return AxisAngle(0.0, (0.0, 0.0, 1.0))
        theta = 2 * math.atan2(nv, q[0])
        n = v / nv
        return AxisAngle(theta, (float(n[0]), float(n[1]), float(n[2])))


IDENTITY = GroupElement((1.0, 0.0, 0.0, 0.0))


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product ``a . b`` (b acts first), renormalized."""
    return GroupElement(tuple(_normalize(quat_multiply(a.q, b.q))))


def inverse(a: GroupElement) -> GroupElement:
    w, x, y, z = a.quaternion
    return GroupElement((w, -x, -y, -z))


def quaternions_from_euler(alpha, beta, gamma):
    """Quaternions of exp(-i alpha Jz) exp(-i beta Jy) exp(-i gamma Jz); vectorized."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, beta, gamma)))
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    sp, dm = (alpha + gamma) / 2, (alpha - gamma) / 2
    return np.stack([c * np.cos(sp), -s * np.sin(dm), s * np.cos(dm), c * np.sin(sp)], axis=-1)


def _euler_raw(q):
    """Unreduced Euler angles reproducing the quaternion exactly (including sign).

    When beta is 0 or pi the split between alpha and gamma is degenerate;
    gamma is set to 0 and the whole phase goes into alpha.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    c = np.hypot(w, z)
    s = np.hypot(x, y)
    beta = 2 * np.arctan2(s, c)
    sp = np.arctan2(z, w)      # (alpha + gamma) / 2
    dm = np.arctan2(-x, y)     # (alpha - gamma) / 2
    top = s < 1e-15
    bottom = c < 1e-15
    alpha = np.where(top, 2 * sp, np.where(bottom, 2 * dm, sp + dm))
    gamma = np.where(top | bottom, 0.0, sp - dm)
    return alpha, beta, gamma


def euler_to_axis_angle(e: EulerAngles) -> AxisAngle:
    return GroupElement.from_euler(e).axis_angle


def axis_angle_to_euler(a: AxisAngle) -> EulerAngles:
    return GroupElement.from_axis_angle(a.theta, a.axis).euler


def haar_quaternions(rng: np.random.Generator, n: int | tuple) -> np.ndarray:
    """Haar-random quaternions from alpha=2pi a, beta=arccos(1-2b), gamma=4pi c.

    gamma spans 4pi so both SU(2) preimages of each rotation are equally likely.
    """
    shape = (n,) if isinstance(n, (int, np.integer)) else tuple(n)
    u = rng.random(shape + (3,))
    return quaternions_from_euler(TWO_PI * u[..., 0], np.arccos(1 - 2 * u[..., 1]),
                                  2 * TWO_PI * u[..., 2])


def haar_sample(rng: np.random.Generator) -> GroupElement:
    return GroupElement(tuple(haar_quaternions(rng, 1)[0]))


# ---------------------------------------------------------------------------
# spin-j matrices


@lru_cache(maxsize=64)
def _jops(tj: int):
    m = np.array([(tj - 2 * r) / 2 for r in range(tj + 1)])
    j = tj / 2
    jp = np.zeros((tj + 1, tj + 1))
    for r in range(1, tj + 1):
        # <m+1| J+ |m> sits at row r-1, column r
        jp[r - 1, r] = math.sqrt(j * (j + 1) - m[r] * (m[r] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return jx.astype(complex), jy, jz


def angular_momentum(j):
    """Return ``(Jx, Jy, Jz)`` for spin j (copies, safe to modify)."""
    tj = twice(j)
    if tj < 0:
        raise DomainError("spin must be non-negative")
    return tuple(a.copy() for a in _jops(tj))


@lru_cache(maxsize=512)
def _tensor(tj: int, tk: int, tq: int) -> np.ndarray:
    d = tj + 1
    out = np.zeros((d, d))
    pre = math.sqrt((tk + 1) / (tj + 1))
    for c in range(d):
        tmp = tj - 2 * c          # 2m'
        tm = tmp + tq             # 2(m'+q)
        if abs(tm) > tj:
            continue
        out[(tj - tm) // 2, c] = pre * _cg2(tj, tmp, tk, tq, tj, tm)
    out.setflags(write=False)
    return out


def spherical_tensor(j, k, q) -> np.ndarray:
    """Spherical tensor operator ``T^(k)_q`` on spin j (Hilbert-Schmidt normalized)."""
    tj, tk, tq = twice(j), twice(k), twice(q)
    if tk % 2 or tq % 2:
        raise DomainError("tensor rank and component must be integers")
    if not 0 <= tk <= 2 * tj:
        raise DomainError(f"tensor rank {tk // 2} outside 0..2j")
    if abs(tq) > tk:
        raise DomainError("|q| exceeds k")
    return _tensor(tj, tk, tq).astype(complex)


def tensor_labels(j):
    """(k, q) labels in superoperator order: k ascending, q descending."""
    tj = twice(j)
    return [(k, q) for k in range(tj + 1) for q in range(k, -k - 1, -1)]


def _phase_powers(u, v, tj):
    """Row/column phase factors u**(m+m') v**(m'-m) on the descending-m grid."""
    m2 = tj - 2 * np.arange(tj + 1)            # 2m
    sum_exp = (m2[:, None] + m2[None, :]) // 2
    diff_exp = (m2[None, :] - m2[:, None]) // 2
    return u[..., None, None] ** sum_exp * v[..., None, None] ** diff_exp


def rotation_matrices(j, quats) -> np.ndarray:
    """Spin-j matrices ``D(g)`` for an array of quaternions (..., 4)."""
    tj = twice(j)
    q = np.asarray(quats, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    c = np.hypot(w, z)
    s = np.hypot(x, y)
    beta = 2 * np.arctan2(s, c)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(c > 1e-300, (w - 1j * z) / c, 1.0)   # exp(-i(a+g)/2)
        v = np.where(s > 1e-300, (y - 1j * x) / s, 1.0)   # exp(+i(a-g)/2)
    d = _small_d_twice(tj, beta)
    return d * _phase_powers(u, v, tj)


def rotation_matrix(j, g: GroupElement) -> np.ndarray:
    """Unitary ``D(g)`` in the J_z eigenbasis (descending l)."""
    return rotation_matrices(j, g.q)


def spin_rotation(j, angle: float, axis) -> np.ndarray:
    """``exp(-i angle n.J)`` for a unit vector n."""
    return rotation_matrix(j, GroupElement.from_axis_angle(angle, axis))


# ---------------------------------------------------------------------------
# algebraic identities for spherical tensors


def tensor_product_expansion(j, k1, q1, k2, q2) -> dict:
    """Coefficients c_k with ``T^(k1)_q1 T^(k2)_q2 = sum_k c_k T^(k)_{q1+q2}``."""
    tj = twice(j)
    tk1, tq1, tk2, tq2 = (twice(v) for v in (k1, q1, k2, q2))
    out = {}
    for k in range(abs(tk1 - tk2) // 2, min(tk1 + tk2, 2 * tj) // 2 + 1):
        tk = 2 * k
        if abs(tq1 + tq2) > tk:
            continue
        sign = -1.0 if (tj + k) % 2 else 1.0
        out[k] = (sign * math.sqrt((tk1 + 1) * (tk2 + 1)) * _sixj2(tk1, tk2, tk, tj, tj, tj)
                  * _cg2(tk1, tq1, tk2, tq2, tk, tq1 + tq2))
    return out


def trace_product(j, factors) -> float:
    """Trace of a product of spherical tensors via a sum of Clebsch-Gordan products.

    ``factors`` is a sequence of (k, q) pairs; the product is taken left to right.
    """
    tj = twice(j)
    tq = [twice(q) for _, q in factors]
    tk = [twice(k) for k, _ in factors]
    if sum(tq) != 0:
        return 0.0
    n = len(factors)
    pre = math.sqrt(np.prod([t + 1 for t in tk]) / (tj + 1) ** n)
    # mu_i = q_1 + ... + q_i, mu_0 = 0
    mu = np.concatenate([[0], np.cumsum(tq)])
    total = 0.0
    for tm in range(-tj, tj + 1, 2):
        prod = 1.0
        for i in range(n):
            lo, hi = tm + mu[i], tm + mu[i + 1]
            if abs(lo) > tj or abs(hi) > tj:
                prod = 0.0
                break
            prod *= _cg2(tk[i], tq[i], tj, int(lo), tj, int(hi))
        total += prod
    return pre * total

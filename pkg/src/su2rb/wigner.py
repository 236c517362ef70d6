"""Angular-momentum special functions.

Spins and magnetic labels are carried as *twice* their value (``2j``) so that
half-integers stay exact.  The public functions accept :class:`HalfInt`,
ints, :class:`fractions.Fraction` or floats that are exact half-integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre

__all__ = [
    "HalfInt", "EulerAngles", "AxisAngle", "DomainError", "twice",
    "clebsch_gordan", "wigner_6j", "wigner_small_d", "wigner_big_D",
    "small_d_matrix", "character", "legendre",
]


class DomainError(ValueError):
    """Raised for labels outside their allowed range."""


@dataclass(frozen=True, order=True)
class HalfInt:
    """A half-integer stored exactly as ``twice_value = 2x``."""

    twice_value: int

    @classmethod
    def of(cls, x) -> "HalfInt":
        return cls(twice(x))

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice_value, 2)

    @property
    def is_integer(self) -> bool:
        return self.twice_value % 2 == 0

    def __float__(self) -> float:
        return self.twice_value / 2

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice_value)

    def __str__(self) -> str:
        if self.twice_value % 2 == 0:
            return str(self.twice_value // 2)
        return f"{self.twice_value}/2"


def twice(x) -> int:
    """Return ``2x`` as an int, rejecting anything that is not a half-integer."""
    if isinstance(x, HalfInt):
        return x.twice_value
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not spin labels")
    if isinstance(x, (int, np.integer)):
        return 2 * int(x)
    if isinstance(x, Fraction):
        t = 2 * x
        if t.denominator != 1:
            raise DomainError(f"{x} is not a half-integer")
        return int(t)
    t = 2.0 * float(x)
    r = round(t)
    if abs(t - r) > 1e-9:
        raise DomainError(f"{x} is not a half-integer")
    return int(r)


@dataclass(frozen=True)
class EulerAngles:
    """z-y-z Euler angles; alpha, gamma in [0, 2pi), beta in [0, pi]."""

    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class AxisAngle:
    """Rotation by ``theta`` in [0, pi] about the unit vector ``axis``."""

    theta: float
    axis: tuple

    @property
    def polar(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.axis[2])))

    @property
    def azimuth(self) -> float:
        return math.atan2(self.axis[1], self.axis[0]) % (2 * math.pi)


# ---------------------------------------------------------------------------
# log-factorials

_LOGFACT = np.array([math.lgamma(n + 1) for n in range(400)])


def _lf(n: int) -> float:
    return float(_LOGFACT[n])


def _check_m(tj: int, tm: int, name: str = "m") -> None:
    if tj < 0:
        raise DomainError(f"negative spin 2j={tj}")
    if abs(tm) > tj:
        raise DomainError(f"|{name}| exceeds its spin (2{name}={tm}, 2j={tj})")
    if (tj - tm) % 2:
        raise DomainError(f"{name} has the wrong parity for its spin")


def _triangle(ta: int, tb: int, tc: int) -> bool:
    return (abs(ta - tb) <= tc <= ta + tb) and (ta + tb + tc) % 2 == 0


@lru_cache(maxsize=1 << 16)
def _cg2(tj1: int, tm1: int, tj2: int, tm2: int, tj: int, tm: int) -> float:
    if tm1 + tm2 != tm or not _triangle(tj1, tj2, tj):
        return 0.0
    # all half-sums below are integers
    a = (tj1 + tj2 - tj) // 2
    b = (tj1 - tj2 + tj) // 2
    c = (-tj1 + tj2 + tj) // 2
    logpre = 0.5 * (
        math.log(tj + 1) + _lf(a) + _lf(b) + _lf(c) - _lf((tj1 + tj2 + tj) // 2 + 1)
        + _lf((tj + tm) // 2) + _lf((tj - tm) // 2)
        + _lf((tj1 - tm1) // 2) + _lf((tj1 + tm1) // 2)
        + _lf((tj2 - tm2) // 2) + _lf((tj2 + tm2) // 2)
    )
    u = (tj1 - tm1) // 2
    v = (tj2 + tm2) // 2
    s1 = (tj - tj2 + tm1) // 2
    s2 = (tj - tj1 - tm2) // 2
    kmin = max(0, -s1, -s2)
    kmax = min(a, u, v)
    total = 0.0
    for k in range(kmin, kmax + 1):
        lt = _lf(k) + _lf(a - k) + _lf(u - k) + _lf(v - k) + _lf(s1 + k) + _lf(s2 + k)
        term = math.exp(logpre - lt)
        total += -term if k % 2 else term
    return total


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """Real Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | j m>`` (Condon-Shortley)."""
    t = [twice(x) for x in (j1, m1, j2, m2, j, m)]
    _check_m(t[0], t[1], "m1")
    _check_m(t[2], t[3], "m2")
    _check_m(t[4], t[5], "m")
    return _cg2(*t)


def _delta_log(ta: int, tb: int, tc: int) -> float:
    return 0.5 * (_lf((ta + tb - tc) // 2) + _lf((ta - tb + tc) // 2)
                  + _lf((-ta + tb + tc) // 2) - _lf((ta + tb + tc) // 2 + 1))


@lru_cache(maxsize=1 << 16)
def _sixj2(ta: int, tb: int, tc: int, td: int, te: int, tf: int) -> float:
    if not (_triangle(ta, tb, tc) and _triangle(ta, te, tf)
            and _triangle(td, tb, tf) and _triangle(td, te, tc)):
        return 0.0
    logpre = (_delta_log(ta, tb, tc) + _delta_log(ta, te, tf)
              + _delta_log(td, tb, tf) + _delta_log(td, te, tc))
    t1 = (ta + tb + tc) // 2
    t2 = (ta + te + tf) // 2
    t3 = (td + tb + tf) // 2
    t4 = (td + te + tc) // 2
    u1 = (ta + tb + td + te) // 2
    u2 = (ta + tc + td + tf) // 2
    u3 = (tb + tc + te + tf) // 2
    total = 0.0
    for t in range(max(t1, t2, t3, t4), min(u1, u2, u3) + 1):
        lt = (_lf(t + 1) - _lf(t - t1) - _lf(t - t2) - _lf(t - t3) - _lf(t - t4)
              - _lf(u1 - t) - _lf(u2 - t) - _lf(u3 - t))
        term = math.exp(logpre + lt)
        total += -term if t % 2 else term
    return total


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6-j symbol ``{j1 j2 j3; j4 j5 j6}`` via the Racah sum."""
    t = [twice(x) for x in (j1, j2, j3, j4, j5, j6)]
    if min(t) < 0:
        raise DomainError("6-j arguments must be non-negative")
    return _sixj2(*t)


@lru_cache(maxsize=1024)
def _small_d_terms(tk: int):
    """Coefficient table for Wigner's closed-form d-matrix sum.

    Returns arrays (row, col, coef, cos_power, sin_power) so that
    ``d[row, col] = sum coef * c**cos_power * s**sin_power`` with
    c = cos(beta/2), s = sin(beta/2).  Rows/cols are indexed in descending m.
    """
    rows, cols, coefs, ps = [], [], [], []
    n = tk + 1
    for r in range(n):
        tmp = tk - 2 * r  # 2m' (row label)
        for cidx in range(n):
            tm = tk - 2 * cidx  # 2m (column label)
            jpm, jmm = (tk + tmp) // 2, (tk - tmp) // 2
            jpc, jmc = (tk + tm) // 2, (tk - tm) // 2
            diff = (tmp - tm) // 2
            logpre = 0.5 * (_lf(jpm) + _lf(jmm) + _lf(jpc) + _lf(jmc))
            for s in range(max(0, -diff), min(jpc, jmm) + 1):
                lt = _lf(jpc - s) + _lf(s) + _lf(diff + s) + _lf(jmm - s)
                sign = -1.0 if (diff + s) % 2 else 1.0
                rows.append(r)
                cols.append(cidx)
                coefs.append(sign * math.exp(logpre - lt))
                ps.append(diff + 2 * s)
    rows = np.array(rows)
    cols = np.array(cols)
    ps = np.array(ps)
    # every term has total degree 2j in (c, s)
    pc = tk - ps
    scatter = np.zeros((len(rows), n * n))
    scatter[np.arange(len(rows)), rows * n + cols] = 1.0
    return rows, cols, np.array(coefs), pc, ps, scatter


def small_d_matrix(k, beta):
    """The real matrix ``d^k(beta)`` (rows/cols descending m); ``beta`` may be an array.

    Output shape is ``beta.shape + (2k+1, 2k+1)``.
    """
    return _small_d_twice(twice(k), beta)


def _small_d_twice(tk: int, beta):
    beta = np.asarray(beta, dtype=float)
    _, _, coefs, pc, ps, scatter = _small_d_terms(tk)
    c = np.cos(beta / 2)[..., None]
    s = np.sin(beta / 2)[..., None]
    vals = coefs * c ** pc * s ** ps
    return (vals @ scatter).reshape(beta.shape + (tk + 1, tk + 1))


def wigner_small_d(k, q, qp, beta):
    """``d^k_{q q'}(beta) = <k q| exp(-i beta J_y) |k q'>``."""
    tk, tq, tqp = twice(k), twice(q), twice(qp)
    _check_m(tk, tq, "q")
    _check_m(tk, tqp, "q'")
    rows, cols, coefs, pc, ps, _ = _small_d_terms(tk)
    r, cidx = (tk - tq) // 2, (tk - tqp) // 2
    sel = (rows == r) & (cols == cidx)
    beta = np.asarray(beta, dtype=float)
    c = np.cos(beta / 2)[..., None]
    s = np.sin(beta / 2)[..., None]
    val = np.sum(coefs[sel] * c ** pc[sel] * s ** ps[sel], axis=-1)
    return float(val) if val.ndim == 0 else val


def wigner_big_D(k, q, qp, g: EulerAngles) -> complex:
    """``D^k_{q q'}(g) = exp(-i q alpha) d^k_{q q'}(beta) exp(-i q' gamma)``."""
    d = wigner_small_d(k, q, qp, g.beta)
    return complex(np.exp(-1j * float(Fraction(twice(q), 2)) * g.alpha) * d
                   * np.exp(-1j * float(Fraction(twice(qp), 2)) * g.gamma))


def character(k, theta):
    """SU(2) character ``sin((2k+1) theta/2) / sin(theta/2)``; vectorized in theta."""
    tk = twice(k)
    if tk < 0:
        raise DomainError("irrep rank must be non-negative")
    n = tk + 1
    theta = np.asarray(theta, dtype=float)
    # reduce theta/2 = x + s*pi so the ratio is evaluated away from every zero of sin
    s = np.round(theta / (2 * np.pi))
    x = theta / 2 - s * np.pi
    sign = np.where((s * (n - 1)) % 2 == 0, 1.0, -1.0)
    small = np.abs(x) < 5e-7
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sin(n * x) / np.sin(x)
    x2 = x * x
    series = n * (1 - (n * n - 1) * x2 / 6 + (n * n - 1) * (3 * n * n - 7) * x2 * x2 / 360)
    out = sign * np.where(small, series, ratio)
    return float(out) if out.ndim == 0 else out


def legendre(k: int, x):
    """Legendre polynomial ``P_k(x)``."""
    return eval_legendre(k, x)

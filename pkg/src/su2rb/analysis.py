"""Decay fitting, error-rate conversion and closed-form sample-complexity analytics."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import least_squares
from scipy.special import eval_legendre

from .protocols import (CHARACTER, FRAME, PROTOCOLS, RANK_ONE, SURVIVAL_LABEL, SYNTHETIC_SPAM,
                        DecayDataset, FiniteFrame)
from .superop import _f_matrix, _m_matrix, average_fidelity
from .wigner import DomainError, _cg2, twice

__all__ = [
    "DecayFit", "FitError", "RBResult", "fit_exponential", "error_rates", "propagate_uncertainty",
    "analyze", "zero_noise_variance", "best_ell", "variance_bound", "variance_table_k",
    "variance_table_j", "FrameComplexity", "qubit_frame_complexity", "QUBIT_SCHEMES",
]


# ---------------------------------------------------------------------------
# fitting

@dataclass(frozen=True)
class DecayFit:
    A: float
    f: float
    sigma_A: float
    sigma_f: float
    residual_norm: float


class FitError(RuntimeError):
    """The decay fit did not converge; ``best`` holds the last iterate."""

    def __init__(self, message: str, best: DecayFit):
        super().__init__(message)
        self.best = best


def _initial_guess(ms: np.ndarray, ys: np.ndarray):
    a0 = ys[0]
    logs = []
    for i in range(len(ms) - 1):
        if ys[i] > 0 and ys[i + 1] > 0:
            logs.append(np.log(ys[i + 1] / ys[i]) / (ms[i + 1] - ms[i]))
    f0 = float(np.exp(np.mean(logs))) if logs else 0.9
    if not np.isfinite(f0) or f0 <= 0:
        f0 = 0.9
    return float(a0), f0


def fit_exponential(ms, values, weights=None, max_iterations: int = 2000) -> DecayFit:
    """Weighted least squares of ``A f^m`` against ``values``.

    ``weights`` are inverse variances.  When they are given the covariance is
    taken as absolute; with uniform weights it is scaled by the residual variance.
    """
    ms = np.asarray(ms, dtype=float)
    ys = np.asarray(values, dtype=float)
    if len(ms) != len(ys):
        raise DomainError("sequence lengths and values differ in length")
    if len(np.unique(ms)) < 2:
        raise DomainError("need at least two distinct sequence lengths")
    order = np.argsort(ms, kind="stable")
    ms, ys = ms[order], ys[order]
    if weights is None:
        sw = np.ones_like(ys)
        absolute = False
    else:
        w = np.asarray(weights, dtype=float)[order]
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and non-negative")
        sw = np.sqrt(w)
        absolute = True

    def resid(p):
        return sw * (p[0] * p[1] ** ms - ys)

    def jac(p):
        a, f = p
        return np.column_stack([sw * f ** ms, sw * a * ms * f ** (ms - 1)])

    x0 = _initial_guess(ms, ys)
    sol = least_squares(resid, x0, jac=jac, method="lm", x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iterations)
    a, f = (float(v) for v in sol.x)
    r = sol.fun
    rss = float(r @ r)
    jm = jac(sol.x)
    try:
        cov = np.linalg.inv(jm.T @ jm)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    if not absolute:
        dof = len(ys) - 2
        cov = cov * (rss / dof if dof > 0 else 0.0)
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    fit = DecayFit(a, f, float(sig[0]), float(sig[1]), float(np.sqrt(rss)))
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"decay fit did not converge: {sol.message}", fit)
    return fit


# ---------------------------------------------------------------------------
# error rates

def error_rates(f, F):
    """``p_raw = F^-1 f`` and ``p_clipped = max(p_raw, 0)``."""
    f = np.asarray(f, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape != (len(f), len(f)):
        raise DomainError("F and f have mismatched sizes")
    p = np.linalg.solve(F, f)
    return p, np.maximum(p, 0.0)


def propagate_uncertainty(sigma_f, F) -> np.ndarray:
    """``sqrt(diag(F^-1 diag(sigma_f^2) F^-T))``."""
    s = np.asarray(sigma_f, dtype=float)
    if np.any(s < 0):
        raise DomainError("standard errors must be non-negative")
    F = np.asarray(F, dtype=float)
    if F.shape != (len(s), len(s)):
        raise DomainError("F and sigma_f have mismatched sizes")
    finv = np.linalg.inv(F)
    return np.sqrt(np.einsum("ka,a,ka->k", finv, s ** 2, finv))


@dataclass
class RBResult:
    f: np.ndarray
    sigma_f: np.ndarray
    p_raw: np.ndarray
    p_clipped: np.ndarray
    sigma_p: np.ndarray
    average_fidelity: float | None
    fits: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    sigma_p_correlated: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "f": self.f.tolist(), "sigma_f": self.sigma_f.tolist(),
            "p_raw": self.p_raw.tolist(), "p_clipped": self.p_clipped.tolist(),
            "sigma_p": self.sigma_p.tolist(), "average_fidelity": self.average_fidelity,
            "sigma_p_correlated": None if self.sigma_p_correlated is None else self.sigma_p_correlated.tolist(),
            "fits": [fit.__dict__ for fit in self.fits],
        }


def _fit_weights(stderr: np.ndarray):
    """Inverse-variance weights; zero standard errors are floored at the smallest positive one."""
    if not np.all(np.isfinite(stderr)) or np.all(stderr <= 0):
        return None
    floor = stderr[stderr > 0].min()
    return 1.0 / np.maximum(stderr, floor) ** 2


def _f_sensitivity(ms: np.ndarray, fit: DecayFit, weights) -> np.ndarray:
    """Linear response of the fitted f to each data point."""
    jm = np.column_stack([fit.f ** ms, fit.A * ms * fit.f ** (ms - 1)])
    w = np.ones_like(ms) if weights is None else weights
    jw = jm.T * w
    return np.linalg.solve(jw @ jm, jw)[1]


def _correlated_f_covariance(data: DecayDataset, fits, weights) -> np.ndarray | None:
    """Covariance of the fitted f_k including the correlation from shared circuits."""
    if data.covariance is None or not np.all(np.isfinite(data.covariance)):
        return None
    ms = np.asarray(data.ms, dtype=float)
    try:
        sens = np.array([_f_sensitivity(ms, fit, w) for fit, w in zip(fits, weights)])
    except np.linalg.LinAlgError:
        return None
    cov_d = data.covariance / np.asarray(data.n_circuits, dtype=float)[:, None, None]
    return np.einsum("am,mab,bm->ab", sens, cov_d, sens)


def analyze(data: DecayDataset, weighted: bool = True) -> RBResult:
    """Fit every irrep decay and convert the quality parameters to error rates.

    ``sigma_p`` propagates the fitted ``sigma_f`` as independent errors.
    ``sigma_p_correlated`` also propagates the covariance between irreps that
    comes from reusing the same circuits for every k.
    """
    fits, weights = [], []
    for a, k in enumerate(data.ks):
        w = _fit_weights(data.stderr[a]) if weighted else None
        weights.append(w)
        fits.append(fit_exponential(data.ms, data.values[a], w))
    f = np.array([fit.f for fit in fits])
    sf = np.array([fit.sigma_f for fit in fits])
    meta = {"protocol": data.protocol, "ks": list(data.ks)}
    if tuple(data.ks) == (SURVIVAL_LABEL,):
        empty = np.array([])
        return RBResult(f, sf, empty, empty, empty, None, fits, meta)
    F = _f_matrix(data.twice_j, True)
    p, pc = error_rates(f, F)
    sp = propagate_uncertainty(sf, F)
    cov_f = _correlated_f_covariance(data, fits, weights)
    spc = None
    if cov_f is not None:
        finv = np.linalg.inv(F)
        spc = np.sqrt(np.clip(np.diag(finv @ cov_f @ finv.T), 0.0, None))
    return RBResult(f, sf, p, pc, sp, average_fidelity(data.twice_j / 2, f), fits, meta, spc)


# ---------------------------------------------------------------------------
# zero-noise variances

def _recoupling_weight(tk: int, tkp: int, rank_one: bool) -> float:
    """``C(k, k')``: 1 for character weights, ``(C^{k'0}_{k0;k0})^2`` for rank-1 weights."""
    if not rank_one:
        return 1.0
    return _cg2(tk, 0, tk, 0, tkp, 0) ** 2


def _labels(j, k, ell):
    tj = twice(j)
    tk = twice(k)
    if tk % 2 or not 0 <= tk // 2 <= tj:
        raise DomainError(f"irrep rank {k} outside 0..2j")
    col = None
    if ell is not None:
        te = twice(ell)
        if abs(te) > tj or (tj - te) % 2:
            raise DomainError(f"level {ell} is not a J_z eigenvalue of spin {j}")
        col = (tj - te) // 2
    return tj, tk // 2, col


def _frame_moments(frame: FiniteFrame, k: int, tj: int, sampling: str):
    """``s[k'] = E[w^2 d^{k'}_00]`` for one drawn frame index, per unit of |c|."""
    if frame.twice_j != tj:
        raise DomainError("frame was built for a different spin")
    c = frame.coefficients[k]
    q = frame.quaternions
    cos_beta = 2 * (q[:, 0] ** 2 + q[:, 3] ** 2) - 1
    d00 = np.array([eval_legendre(kp, cos_beta) for kp in range(tj + 1)])
    if sampling == "optimal":
        return np.abs(c).sum() * (d00 @ np.abs(c))
    if sampling == "uniform":
        return frame.size * (d00 @ c ** 2)
    raise DomainError("sampling must be 'optimal' or 'uniform'")


def zero_noise_variance(protocol: str, j, k, ell=None, frame: FiniteFrame | None = None,
                        sampling: str = "optimal") -> float:
    """Exact zero-noise variance of the normalized single-circuit estimator.

    Physical-SPAM protocols need ``ell``; frame protocols need ``frame``.
    ``sampling`` selects how frame indices are drawn: proportional to ``|c_i|``
    ("optimal") or uniformly ("uniform", as the simulation engine does).
    """
    if protocol not in PROTOCOLS or protocol == "rb":
        raise DomainError(f"no irrep-resolved estimator for protocol {protocol!r}")
    physical = protocol not in SYNTHETIC_SPAM
    if physical and ell is None:
        raise DomainError(f"protocol {protocol} needs a SPAM level ell")
    if protocol in FRAME and frame is None:
        raise DomainError(f"protocol {protocol} needs a finite frame")
    tj, k, col = _labels(j, k, ell if physical else None)
    mm = np.asarray(_m_matrix(tj))
    if protocol == "ssrb":
        return 0.0
    kmax = min(2 * k, tj) if protocol not in FRAME else tj
    kps = np.arange(kmax + 1)
    if protocol in FRAME:
        moments = _frame_moments(frame, k, tj, sampling)[: kmax + 1]
    else:
        rank_one = protocol in RANK_ONE
        moments = np.array([(2 * k + 1) ** 2 * _recoupling_weight(2 * k, 2 * kp, rank_one) / (2 * kp + 1)
                            for kp in kps])
    if physical:
        mk = mm[k, col]
        if abs(mk) < 1e-12:
            raise DomainError(f"level {ell} carries no signal for irrep {k}")
        second = float(moments @ mm[kps, col] ** 2)
        return second / mk ** 4 - 1.0
    overlap = (mm[k] ** 2) @ mm[kps].T  # sum_l M_kl^2 M_k'l
    return float(moments @ overlap ** 2 - np.sum(mm[k] ** 4))


def best_ell(protocol: str, j, k, frame: FiniteFrame | None = None, sampling: str = "optimal"):
    """Level minimizing the physical-SPAM variance; the positive level of a +-l tie."""
    tj = twice(j)
    best, best_val = None, np.inf
    mm = np.asarray(_m_matrix(tj))
    tk = twice(k)
    for col in range(tj + 1):
        if abs(mm[tk // 2, col]) < 1e-12:
            continue
        ell = Fraction(tj - 2 * col, 2)
        v = zero_noise_variance(protocol, j, k, ell, frame, sampling)
        if best is None or v < best_val - 1e-9 * max(1.0, abs(best_val)):
            best, best_val = ell, v
    return best, best_val


TABLE_PROTOCOLS = ("chirb", "r1rb", "sschirb", "ssr1rb")


def _table_row(tj: int, k: int) -> list:
    row = []
    for proto in TABLE_PROTOCOLS:
        if proto in SYNTHETIC_SPAM:
            row.append(zero_noise_variance(proto, Fraction(tj, 2), k))
        else:
            row.append(best_ell(proto, Fraction(tj, 2), k)[1])
    return row


def variance_table_k(j=Fraction(7, 2)) -> np.ndarray:
    """Rows k = 0..2j, columns (chirb, r1rb, sschirb, ssr1rb); physical columns use the best level."""
    tj = twice(j)
    return np.array([_table_row(tj, k) for k in range(tj + 1)])


def variance_table_j(max_j=Fraction(7, 2)) -> np.ndarray:
    """Rows j = 0, 1/2, ..., max_j at k = 2j; same columns as :func:`variance_table_k`."""
    return np.array([_table_row(tj, tj) for tj in range(twice(max_j) + 1)])


def variance_bound(protocol: str, j, k, frame: FiniteFrame | None = None, ell=None) -> float:
    """Analytic upper bound on the single-circuit variance.

    For physical-SPAM protocols the bound holds for the unnormalized estimator;
    passing ``ell`` divides it by ``M_{k,l}^4`` so it bounds the normalized one.
    """
    tj = twice(j)
    tk = twice(k)
    if tk % 2 or not 0 <= tk // 2 <= tj:
        raise DomainError(f"irrep rank {k} outside 0..2j")
    k = tk // 2
    d = tj + 1
    n = 2 * k + 1
    if protocol in FRAME:
        if frame is None:
            raise DomainError(f"protocol {protocol} needs a finite frame")
        c1 = float(np.abs(frame.coefficients[k]).sum())
    if protocol in ("chirb", "r1rb"):
        bound = float(n * n)
    elif protocol == "ffrb":
        bound = c1 ** 2
    elif protocol == "ssrb":
        return float(tj + 2)
    elif protocol == "sschirb":
        return float(n * n * (1 + d * n * n))
    elif protocol == "ssr1rb":
        return float(n * (1 + d * n))
    elif protocol == "ssffrb":
        return (tj + 2) * c1 ** 2
    else:
        raise DomainError(f"no variance bound for protocol {protocol!r}")
    if ell is not None:
        _, _, col = _labels(j, k, ell)
        bound /= float(_m_matrix(tj)[k, col]) ** 4
    return bound


# ---------------------------------------------------------------------------
# qubit frame sample complexity

QUBIT_SCHEMES = ("clifford_char", "pauli_char", "z2_char", "pauli_frame_full",
                 "nonpauli_frame_full", "nqubit_full", "nqubit_rank1")


@dataclass(frozen=True)
class FrameComplexity:
    """``coefficients`` maps each coefficient value to its multiplicity."""

    n_group: int
    coefficients: dict
    uniform_metric: Fraction
    optimal_metric: Fraction


def _multiset(scheme: str, n: int | None) -> dict:
    F = Fraction
    if scheme == "clifford_char":
        return {F(3, 8): 1, F(-1, 8): 9, F(1, 8): 6, F(0): 8}
    if scheme == "pauli_char":
        return {F(1, 4): 2, F(-1, 4): 2}
    if scheme == "z2_char":
        return {F(1, 2): 1, F(-1, 2): 1}
    if scheme == "pauli_frame_full":
        return {F(3, 4): 1, F(-1, 4): 3}
    if scheme == "nonpauli_frame_full":
        return {F(1, 4): 6, F(-1, 4): 6}
    if n is None or n < 1:
        raise DomainError(f"scheme {scheme} needs a qubit count n >= 1")
    q = F(1, 4 ** n)
    if scheme == "nqubit_full":
        return {1 - q: 1, -q: 4 ** n - 1}
    if scheme == "nqubit_rank1":
        half = 2 ** (2 * n - 1)
        return {q: half, -q: half}
    raise DomainError(f"unknown scheme {scheme!r}")


def qubit_frame_complexity(scheme: str, n: int | None = None) -> FrameComplexity:
    """Group size, coefficient multiset, ``N |c|_2^2`` and ``|c|_1^2`` in exact arithmetic."""
    coeffs = _multiset(scheme, n)
    size = sum(coeffs.values())
    l2 = sum(mult * c * c for c, mult in coeffs.items())
    l1 = sum(mult * abs(c) for c, mult in coeffs.items())
    return FrameComplexity(size, coeffs, size * l2, l1 * l1)

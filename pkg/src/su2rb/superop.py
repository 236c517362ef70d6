"""Superoperators in the ordered spherical-tensor basis.

The basis is ``T^(0)_0; T^(1)_1, T^(1)_0, T^(1)_-1; ...`` so a rotation
superoperator is block diagonal with blocks ``D^0, D^1, ..., D^{2j}``.
Entries are Hilbert-Schmidt matrix elements ``<<T_a| E(T_b) >> = tr(T_a^dag E(T_b))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spinrep import GroupElement, _jops, _tensor, rotation_matrices
from .wigner import DomainError, _sixj2, twice

__all__ = [
    "Superoperator", "tensor_basis_matrix", "rotation_superop", "rotation_superops",
    "channel_superop", "superop_from_matrix_units", "irrep_projector", "m_matrix",
    "f_matrix", "f_inverse", "weight_k_map", "twirl", "exact_quality_params", "exact_error_rates",
    "elementwise_error_rates",
    "average_fidelity", "rank1_spam_superop", "identity_superop", "block_slices",
    "angular_momentum_channel",
]


def block_slices(tj: int):
    """Index slices of the irrep blocks k = 0..2j."""
    out, start = [], 0
    for k in range(tj + 1):
        out.append(slice(start, start + 2 * k + 1))
        start += 2 * k + 1
    return out


@dataclass(frozen=True)
class Superoperator:
    """Dense superoperator on spin ``twice_j / 2`` in the spherical-tensor basis."""

    twice_j: int
    matrix: np.ndarray

    def __post_init__(self):
        d2 = (self.twice_j + 1) ** 2
        if self.matrix.shape != (d2, d2):
            raise DomainError(f"superoperator must be {d2}x{d2}")

    @property
    def dim(self) -> int:
        return self.twice_j + 1

    @property
    def block_sizes(self) -> tuple:
        return tuple(2 * k + 1 for k in range(self.twice_j + 1))

    def block(self, k: int) -> np.ndarray:
        s = block_slices(self.twice_j)[k]
        return self.matrix[s, s]

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.twice_j, self.matrix @ other.matrix)

    def apply(self, op: np.ndarray) -> np.ndarray:
        """Act on an operator given as a (2j+1)x(2j+1) matrix."""
        w = tensor_basis_matrix(self.twice_j)
        return (w @ (self.matrix @ (w.conj().T @ np.asarray(op).reshape(-1)))).reshape(op.shape)

    def to_matrix_units(self) -> np.ndarray:
        """The same map acting on row-major ``vec(rho)``."""
        w = tensor_basis_matrix(self.twice_j)
        return w @ self.matrix @ w.conj().T


@lru_cache(maxsize=32)
def tensor_basis_matrix(tj: int) -> np.ndarray:
    """Unitary whose columns are row-major vec(T^(k)_q) in superoperator order."""
    cols = [_tensor(tj, 2 * k, 2 * q).reshape(-1)
            for k in range(tj + 1) for q in range(k, -k - 1, -1)]
    w = np.array(cols, dtype=complex).T
    w.setflags(write=False)
    return w


def identity_superop(j) -> Superoperator:
    tj = twice(j)
    return Superoperator(tj, np.eye((tj + 1) ** 2, dtype=complex))


def rotation_superops(j, quats) -> np.ndarray:
    """Stack of rotation superoperator matrices for quaternions (..., 4)."""
    tj = twice(j)
    q = np.asarray(quats, dtype=float)
    d2 = (tj + 1) ** 2
    out = np.zeros(q.shape[:-1] + (d2, d2), dtype=complex)
    for k, s in enumerate(block_slices(tj)):
        out[..., s, s] = rotation_matrices(k, q)
    return out


def rotation_superop(j, g: GroupElement) -> Superoperator:
    """Block-diagonal ``diag(D^0(g), ..., D^{2j}(g))``."""
    return Superoperator(twice(j), rotation_superops(j, g.q))


def _from_mu(tj: int, s_mu) -> Superoperator:
    w = tensor_basis_matrix(tj)
    return Superoperator(tj, w.conj().T @ np.asarray(s_mu) @ w)


def superop_from_matrix_units(j, s_mu: np.ndarray) -> Superoperator:
    """Convert a map on row-major vec(rho) into the spherical-tensor basis."""
    return _from_mu(twice(j), s_mu)


def channel_superop(j, kraus) -> Superoperator:
    """Superoperator of ``rho -> sum_i K_i rho K_i^dag``."""
    return _channel(twice(j), kraus)


def _channel(tj: int, kraus) -> Superoperator:
    d = tj + 1
    s_mu = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        k = np.asarray(k)
        if k.shape != (d, d):
            raise DomainError(f"Kraus operator shape {k.shape} does not match dimension {d}")
        s_mu += np.kron(k, k.conj())
    return _from_mu(tj, s_mu)


def _check_rank(tj: int, k) -> int:
    tk = twice(k)
    if tk % 2 or not 0 <= tk // 2 <= tj:
        raise DomainError(f"irrep rank {k} outside 0..2j")
    return tk // 2


def irrep_projector(j, k) -> Superoperator:
    tj = twice(j)
    k = _check_rank(tj, k)
    p = np.zeros((tj + 1) ** 2, dtype=complex)
    p[block_slices(tj)[k]] = 1
    return Superoperator(tj, np.diag(p))


def rank1_spam_superop(j, k) -> Superoperator:
    """``|T^(k)_0>><<T^(k)_0|``: the middle diagonal entry of block k."""
    tj = twice(j)
    k = _check_rank(tj, k)
    p = np.zeros(((tj + 1) ** 2,) * 2, dtype=complex)
    i = k * k + k  # offset k^2 plus position of q = 0 within the block
    p[i, i] = 1
    return Superoperator(tj, p)


@lru_cache(maxsize=32)
def _m_matrix(tj: int) -> np.ndarray:
    m = np.array([np.diag(_tensor(tj, 2 * k, 0)) for k in range(tj + 1)])
    m.setflags(write=False)
    return m


def m_matrix(j) -> np.ndarray:
    """``M[k, l] = <l| T^(k)_0 |l>``: rows k = 0..2j, columns l = j..-j."""
    return _m_matrix(twice(j)).copy()


@lru_cache(maxsize=64)
def _f_matrix(tj: int, normalized: bool) -> np.ndarray:
    n = tj + 1
    f = np.empty((n, n))
    for k in range(n):
        for kp in range(n):
            sign = -1.0 if (tj + k + kp) % 2 else 1.0
            f[k, kp] = sign * _sixj2(2 * k, tj, tj, 2 * kp, tj, tj)
    if normalized:
        f *= n
    f.setflags(write=False)
    return f


def f_matrix(j, normalized: bool = True) -> np.ndarray:
    """``F[k, k'] = (-1)^(2j+k+k') {k j j; k' j j}``, times (2j+1) when normalized."""
    return _f_matrix(twice(j), bool(normalized)).copy()


@lru_cache(maxsize=64)
def _f_inverse(tj: int, normalized: bool):
    f = _f_matrix(tj, normalized)
    inv = np.linalg.solve(f, np.eye(tj + 1))
    inv.setflags(write=False)
    return inv, float(np.linalg.cond(f))


def f_inverse(j, normalized: bool = True):
    """Return ``(F^-1, cond(F))``; cached per spin."""
    inv, cond = _f_inverse(twice(j), bool(normalized))
    return inv.copy(), cond


def weight_k_map(j, k) -> Superoperator:
    """``rho -> (1/(2k+1)) sum_q T_q rho T_q^dag`` (uniformly random weight-k error)."""
    tj = twice(j)
    k = _check_rank(tj, k)
    kraus = [_tensor(tj, 2 * k, 2 * q) / math.sqrt(2 * k + 1) for q in range(k, -k - 1, -1)]
    return _channel(tj, kraus)


def exact_quality_params(channel: Superoperator) -> np.ndarray:
    """``f_k = (1/(2k+1)) sum_q <<T^(k)_q| E(T^(k)_q)>>``."""
    return np.array([np.trace(channel.block(k)).real / (2 * k + 1)
                     for k in range(channel.twice_j + 1)])


def exact_error_rates(channel: Superoperator) -> np.ndarray:
    """Weights ``p_k`` with ``twirl(E) = sum_k p_k W_k`` for the weight-k maps ``W_k``.

    Read off the Choi matrix as ``sum_q <<T_q| J |T_q>> / (2j+1)``.  This equals
    ``F^-1 f`` (normalized F) but avoids the cancellation that a linear solve
    suffers when the p_k span many decades.
    """
    tj = channel.twice_j
    d = tj + 1
    s = channel.to_matrix_units().reshape(d, d, d, d)
    choi = s.transpose(0, 2, 1, 3).reshape(d * d, d * d)
    w = tensor_basis_matrix(tj)
    diag = np.einsum("ia,ij,ja->a", w.conj(), choi, w).real
    return np.array([diag[sl].sum() for sl in block_slices(tj)]) / d


def elementwise_error_rates(tj: int, mask_minus_one: np.ndarray) -> np.ndarray:
    """``p_k`` of the channel ``rho_ll' -> mu_ll' rho_ll'`` given ``mu - 1``.

    Only q = 0 tensors overlap a diagonal Kraus decomposition, and rows k >= 1
    of M sum to zero, so ``p_k = M_k (mu - 1) M_k^T / (2j+1)`` exactly; passing
    ``mu - 1`` directly keeps tiny p_k accurate.  p_0 follows from sum p_k = 1.
    """
    m = _m_matrix(tj)
    p = np.einsum("kl,lm,km->k", m, np.asarray(mask_minus_one), m).real / (tj + 1)
    p[0] = 1 - p[1:].sum()
    return p


def twirl(j, channel: Superoperator) -> Superoperator:
    """SU(2)-twirled channel ``sum_k f_k Pi_k``."""
    tj = twice(j)
    f = exact_quality_params(channel)
    diag = np.concatenate([np.full(2 * k + 1, f[k]) for k in range(tj + 1)])
    return Superoperator(tj, np.diag(diag).astype(complex))


def average_fidelity(j, f) -> float:
    """``(d^-1 sum_k (2k+1) f_k + 1) / (d + 1)`` with d = 2j+1."""
    tj = twice(j)
    f = np.asarray(f, dtype=float)
    d = tj + 1
    if f.shape != (d,):
        raise DomainError(f"expected {d} quality parameters, got {f.shape}")
    return float((np.dot(2 * np.arange(d) + 1, f) / d + 1) / (d + 1))


def angular_momentum_channel(j) -> Superoperator:
    """``rho -> (Jx rho Jx + Jy rho Jy + Jz rho Jz) / (j(j+1))``."""
    tj = twice(j)
    jj = tj / 2 * (tj / 2 + 1)
    return _channel(tj, [a / math.sqrt(jj) for a in _jops(tj)])

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from su2rb.spinrep import GroupElement, angular_momentum, haar_quaternions, haar_sample, rotation_matrix, spherical_tensor
from su2rb.superop import (Superoperator, angular_momentum_channel, average_fidelity, block_slices,
                           channel_superop, exact_quality_params, f_inverse, f_matrix, identity_superop,
                           irrep_projector, m_matrix, rank1_spam_superop, rotation_superop,
                           rotation_superops, superop_from_matrix_units, tensor_basis_matrix, twirl,
                           weight_k_map)
from su2rb.wigner import DomainError, HalfInt

H = HalfInt


def _random_unitary(d, rng):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _random_channel(tj, rng, rank=3):
    d = tj + 1
    a = rng.normal(size=(rank * d, d)) + 1j * rng.normal(size=(rank * d, d))
    q, _ = np.linalg.qr(a)  # isometry, so the Kraus set is trace preserving
    return [q[i * d:(i + 1) * d] for i in range(rank)]


def test_block_layout():
    sl = block_slices(3)
    assert [(s.start, s.stop) for s in sl] == [(0, 1), (1, 4), (4, 9), (9, 16)]


def test_tensor_basis_is_unitary():
    for tj in range(9):
        w = tensor_basis_matrix(tj)
        assert np.abs(w.conj().T @ w - np.eye((tj + 1) ** 2)).max() < 1e-12


def test_m_matrix_is_orthogonal_and_matches_closed_form():
    assert np.abs(m_matrix(3.5) - oracles.M_SEVEN_HALVES).max() < 1e-12
    for tj in range(9):
        m = m_matrix(H(tj))
        assert np.abs(m @ m.T - np.eye(tj + 1)).max() < 1e-12
        assert np.allclose(m[0], 1 / math.sqrt(tj + 1))


def test_f_matrix_two_constructions_agree():
    for tj in range(1, 5):
        assert np.abs(f_matrix(H(tj), normalized=False) - oracles.f_matrix_from_traces(tj)).max() < 1e-10
    want = np.array(oracles.F_SEVEN_HALVES, dtype=float)
    assert np.abs(f_matrix(3.5) - want).max() < 1e-12


def test_f_matrix_is_quality_of_weight_k_errors():
    for tj in range(1, 6):
        f = f_matrix(H(tj), normalized=False)
        for kp in range(tj + 1):
            assert np.abs(exact_quality_params(weight_k_map(H(tj), kp)) - f[:, kp]).max() < 1e-12


def test_f_inverse_and_condition():
    for tj in range(1, 8):
        inv, cond = f_inverse(H(tj))
        assert np.abs(inv @ f_matrix(H(tj)) - np.eye(tj + 1)).max() < 1e-9
        assert cond >= 1


@given(st.integers(0, 8), st.integers(0, 1000))
def test_rotation_superop_matches_conjugation(tj, seed):
    rng = np.random.default_rng(seed)
    g = haar_sample(rng)
    d = rotation_matrix(H(tj), g)
    chan = channel_superop(H(tj), [d])
    assert np.abs(chan.matrix - rotation_superop(H(tj), g).matrix).max() < 1e-10


def test_rotation_superops_stack():
    q = haar_quaternions(np.random.default_rng(1), 3)
    s = rotation_superops(H(2), q)
    assert s.shape == (3, 9, 9)
    assert np.allclose(s[1], rotation_superop(H(2), GroupElement(tuple(q[1]))).matrix)


def test_apply_and_matrix_units_agree():
    rng = np.random.default_rng(2)
    tj = 3
    kraus = _random_channel(tj, rng)
    chan = channel_superop(H(tj), kraus)
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    direct = sum(k @ rho @ k.conj().T for k in kraus)
    assert np.abs(chan.apply(rho) - direct).max() < 1e-12
    back = superop_from_matrix_units(H(tj), chan.to_matrix_units())
    assert np.abs(back.matrix - chan.matrix).max() < 1e-12


def test_trace_preservation_fixes_first_row():
    chan = channel_superop(H(3), _random_channel(3, np.random.default_rng(3)))
    row = np.zeros(16)
    row[0] = 1
    assert np.abs(chan.matrix[0] - row).max() < 1e-12


def test_projectors_resolve_identity():
    tj = 4
    total = sum(irrep_projector(H(tj), k).matrix for k in range(tj + 1))
    assert np.allclose(total, identity_superop(H(tj)).matrix)
    p = irrep_projector(H(tj), 2)
    assert np.allclose((p @ p).matrix, p.matrix)


def test_rank1_spam_superop_picks_middle_entry():
    s = rank1_spam_superop(H(3), 2)
    i = np.argmax(np.abs(np.diag(s.matrix)))
    assert i == 2 * 2 + 2
    with pytest.raises(DomainError):
        rank1_spam_superop(H(3), 4)
    with pytest.raises(DomainError):
        irrep_projector(H(3), 0.5)


def test_twirl_matches_haar_average():
    rng = np.random.default_rng(4)
    tj = 2
    chan = channel_superop(H(tj), _random_channel(tj, rng))
    q = haar_quaternions(rng, 20000)
    rs = rotation_superops(H(tj), q)
    avg = np.einsum("nba,bc,ncd->ad", rs.conj(), chan.matrix, rs) / len(q)
    assert np.abs(avg - twirl(H(tj), chan).matrix).max() < 0.03


def test_average_fidelity_of_unitary_channel():
    rng = np.random.default_rng(5)
    for tj in (1, 3, 7):
        d = tj + 1
        u = _random_unitary(d, rng)
        f = exact_quality_params(channel_superop(H(tj), [u]))
        want = (abs(np.trace(u)) ** 2 + d) / (d * (d + 1))
        assert average_fidelity(H(tj), f) == pytest.approx(want, abs=1e-12)
    assert average_fidelity(H(3), np.ones(4)) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        average_fidelity(H(3), np.ones(3))


def test_angular_momentum_channel_quality():
    for tj in range(1, 8):
        j = tj / 2
        f = exact_quality_params(angular_momentum_channel(H(tj)))
        k = np.arange(tj + 1)
        assert np.allclose(f, 1 - k * (k + 1) / (2 * j * (j + 1)))


def test_tensor_is_eigenvector_of_twirled_jz_dephasing():
    # commuting a tensor with Jz gives q, so a z-rotation acts diagonally
    tj = 3
    _, _, jz = angular_momentum(H(tj))
    u = np.diag(np.exp(-0.4j * np.diag(jz)))
    chan = channel_superop(H(tj), [u])
    t = spherical_tensor(H(tj), 2, 1)
    assert np.abs(chan.apply(t) - np.exp(-0.4j) * t).max() < 1e-12


def test_superoperator_shape_check():
    with pytest.raises(DomainError):
        Superoperator(2, np.eye(4))
    with pytest.raises(DomainError):
        channel_superop(H(2), [np.eye(2)])


def test_error_rates_are_a_distribution_for_random_channels():
    from su2rb.superop import exact_error_rates
    rng = np.random.default_rng(6)
    for tj in (1, 2, 5):
        chan = channel_superop(H(tj), _random_channel(tj, rng))
        p = exact_error_rates(chan)
        assert np.all(p > -1e-12) and p.sum() == pytest.approx(1.0)
        assert np.abs(f_matrix(H(tj)) @ p - exact_quality_params(chan)).max() < 1e-12

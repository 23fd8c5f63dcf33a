import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdfvac.dirac import (
    ALPHA,
    BETA,
    CONJUGATION,
    IDENTITY,
    d0_block,
    dirac_matrices,
    free_operator,
    lambda_projectors,
    m_matrix,
    p0_projector,
    pair_trace,
)

momenta = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_clifford_relations():
    mats = list(dirac_matrices())
    for i, a in enumerate(mats):
        for j, b in enumerate(mats):
            target = 2 * IDENTITY if i == j else 0 * IDENTITY
            np.testing.assert_array_equal(a @ b + b @ a, target)


def test_dirac_matrices_are_copies():
    a1, _, _, beta = dirac_matrices()
    a1[0, 0] = 7
    beta[0, 0] = 7
    assert ALPHA[0][0, 0] == 0 and BETA[0, 0] == 1


@given(momenta)
def test_d0_squares_to_energy(p):
    d = d0_block(p)
    np.testing.assert_allclose(d @ d, (1 + p @ p) * IDENTITY, atol=1e-12 * (1 + p @ p))


@given(momenta)
def test_lambda_projectors(p):
    plus, minus = lambda_projectors(p)
    np.testing.assert_allclose(plus + minus, IDENTITY, atol=1e-14)
    np.testing.assert_allclose(plus @ plus, plus, atol=1e-13)
    np.testing.assert_allclose(plus @ minus, 0, atol=1e-13)
    assert np.trace(plus).real == pytest.approx(2.0)
    e = np.sqrt(1 + p @ p)
    np.testing.assert_allclose(d0_block(p) @ minus, -e * minus, atol=1e-12 * e)


@settings(max_examples=50)
@given(momenta, momenta)
def test_pair_trace_against_matrices(p, q):
    plus, _ = lambda_projectors(p)
    _, minus = lambda_projectors(q)
    direct = np.trace(plus @ minus).real
    val = pair_trace(p, q)
    assert val == pytest.approx(direct, abs=1e-12)
    assert -1e-12 <= val <= 2 + 1e-12


def test_pair_trace_values():
    assert pair_trace([0, 0, 0], [0, 0, 0]) == 0.0
    assert pair_trace([1, 2, 3], [1, 2, 3]) == pytest.approx(0.0, abs=1e-15)
    # p = -q = e_x: 1 - (-1 + 1)/2.
    assert pair_trace([1, 0, 0], [-1, 0, 0]) == pytest.approx(1.0)


def test_m_matrix_values():
    np.testing.assert_allclose(m_matrix(np.zeros(3), np.zeros(3)), 0)
    p = np.array([0.3, -1.0, 0.2])
    np.testing.assert_allclose(m_matrix(p, p), 0, atol=1e-15)


def test_conjugation_maps_d0():
    # U conj(D0(-p)) U^-1 = -D0(p).
    u = CONJUGATION
    p = np.array([0.4, -0.7, 1.3])
    lhs = u @ np.conj(d0_block(-p)) @ np.linalg.inv(u)
    np.testing.assert_allclose(lhs, -d0_block(p), atol=1e-14)


def test_free_operator_spectrum(tiny_lattice):
    d0 = free_operator(tiny_lattice)
    w = np.linalg.eigvalsh(d0.matrix)
    e = np.sort(np.repeat(tiny_lattice.mode_energy, 2))
    np.testing.assert_allclose(w, np.concatenate([-e[::-1], e]), atol=1e-13)


def test_p0_is_negative_projector(small_lattice):
    p0 = p0_projector(small_lattice)
    d0 = free_operator(small_lattice)
    np.testing.assert_allclose(p0.matrix @ p0.matrix, p0.matrix, atol=1e-13)
    np.testing.assert_allclose(d0.commutator(p0).matrix, 0, atol=1e-13)
    assert np.trace(p0.matrix).real == pytest.approx(2 * small_lattice.n_modes)
    w = np.linalg.eigvalsh(p0.matrix @ d0.matrix @ p0.matrix)
    assert w[-1] <= 1e-12


def test_matrix_traces():
    for m in list(ALPHA) + [BETA]:
        assert np.trace(m) == 0
    np.testing.assert_array_equal(BETA @ BETA, IDENTITY)


def test_free_block_values():
    np.testing.assert_array_equal(d0_block(np.zeros(3)), BETA)
    w = np.linalg.eigvalsh(d0_block([3.0, 0.0, 0.0]))
    np.testing.assert_allclose(w, [-np.sqrt(10)] * 2 + [np.sqrt(10)] * 2)
    _, minus = lambda_projectors(np.zeros(3))
    np.testing.assert_array_equal(minus, np.diag([0, 0, 1, 1]).astype(complex))


@given(momenta)
def test_pair_trace_from_origin(q):
    assert pair_trace(np.zeros(3), q) == pytest.approx(1 - 1 / np.sqrt(1 + q @ q), abs=1e-14)


@given(momenta)
def test_m_matrix_from_origin(q):
    e = np.sqrt(1 + q @ q)
    m = m_matrix(np.zeros(3), q)
    assert np.sum(np.abs(m) ** 2) == pytest.approx(8 * (1 - 1 / e) / (1 + e) ** 2, abs=1e-13)


@settings(max_examples=30)
@given(momenta, momenta)
def test_m_matrix_trace(p, q):
    # Tr M = (4 (p.q + 1)/(E_p E_q) - 4) / (E_p + E_q) = -4 pair_trace / (E_p + E_q).
    ep, eq = np.sqrt(1 + p @ p), np.sqrt(1 + q @ q)
    assert np.trace(m_matrix(p, q)).real == pytest.approx(-4 * pair_trace(p, q) / (ep + eq), abs=1e-13)

"""Dirac matrices, free-operator blocks and the spectral projectors of each block.

All functions accept momenta of shape ``(..., 3)`` and broadcast, returning
``(..., 4, 4)`` spinor matrices.  The representation is the standard Dirac
basis: ``beta = diag(1, 1, -1, -1)`` and ``alpha_k`` off-diagonal with Pauli
blocks.
"""

from __future__ import annotations

import numpy as np

from .lattice import energy_scale

__all__ = [
    "PAULI",
    "ALPHA",
    "BETA",
    "IDENTITY",
    "CONJUGATION",
    "dirac_matrices",
    "d0_block",
    "lambda_projectors",
    "pair_trace",
    "m_matrix",
    "p0_projector",
    "free_operator",
    "abs_free_operator",
]

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_ZERO2 = np.zeros((2, 2), dtype=complex)
_ID2 = np.eye(2, dtype=complex)

ALPHA = np.array([np.block([[_ZERO2, s], [s, _ZERO2]]) for s in PAULI])
BETA = np.block([[_ID2, _ZERO2], [_ZERO2, -_ID2]])
IDENTITY = np.eye(4, dtype=complex)

# Spinor part of charge conjugation, psi -> CONJUGATION @ conj(psi).
CONJUGATION = 1j * BETA @ ALPHA[1]


def _check_clifford():
    mats = list(ALPHA) + [BETA]
    for i, a in enumerate(mats):
        for j, b in enumerate(mats):
            expected = 2.0 * IDENTITY if i == j else 0.0 * IDENTITY
            if not np.allclose(a @ b + b @ a, expected, atol=0.0):
                raise AssertionError("Dirac matrices violate the Clifford relations")


_check_clifford()


def dirac_matrices():
    """Return ``(alpha_1, alpha_2, alpha_3, beta)`` as fresh copies."""
    return ALPHA[0].copy(), ALPHA[1].copy(), ALPHA[2].copy(), BETA.copy()


def d0_block(p):
    """Free Dirac block ``alpha.p + beta`` at momentum ``p``."""
    p = np.asarray(p, dtype=float)
    return np.einsum("...k,kab->...ab", p, ALPHA) + BETA


def lambda_projectors(p):
    """Projectors onto the positive and negative eigenspaces of ``d0_block(p)``.

    Returns
    -------
    plus, minus : ndarray, shape (..., 4, 4)
        ``(+-(alpha.p + beta) + E(p)) / (2 E(p))``.
    """
    d = d0_block(p)
    e = energy_scale(p)[..., None, None]
    half = 0.5 * IDENTITY
    return half + d / (2.0 * e), half - d / (2.0 * e)


def pair_trace(p, q):
    """``Tr[Lambda+(p) Lambda-(q)] = 1 - (p.q + 1) / (E(p) E(q))``.

    Always within ``[0, 2]``; vanishes at ``p = q``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 1.0 - (np.sum(p * q, axis=-1) + 1.0) / (energy_scale(p) * energy_scale(q))


def m_matrix(p, q):
    """Kernel of the first-order density response.

    ``M(p, q) = [(alpha.p + beta)/E(p) (alpha.q + beta)/E(q) - 1] / (E(p) + E(q))``.
    """
    ep = energy_scale(p)
    eq = energy_scale(q)
    sp = d0_block(p) / ep[..., None, None]
    sq = d0_block(q) / eq[..., None, None]
    return (sp @ sq - IDENTITY) / (ep + eq)[..., None, None]


def _block_diag(blocks):
    m = blocks.shape[0]
    out = np.zeros((m, 4, m, 4), dtype=complex)
    idx = np.arange(m)
    out[idx, :, idx, :] = blocks
    return out.reshape(4 * m, 4 * m)


def free_operator(lattice):
    """Free Dirac operator as a block-diagonal :class:`KernelOperator`."""
    from .operators import KernelOperator

    return KernelOperator(lattice, _block_diag(d0_block(lattice.modes)))


def abs_free_operator(lattice):
    """``|D0|``, i.e. ``E(p)`` times the identity on each block."""
    from .operators import KernelOperator

    blocks = lattice.mode_energy[:, None, None] * IDENTITY
    return KernelOperator(lattice, _block_diag(blocks))


def p0_projector(lattice):
    """Projector onto the negative spectral subspace of the free operator."""
    from .operators import KernelOperator

    _, minus = lambda_projectors(lattice.modes)
    return KernelOperator(lattice, _block_diag(minus))

"""Vacuum energy functional, mean-field operator and related diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .dirac import abs_free_operator, d0_block, free_operator, p0_projector
from .lattice import c_norm, coulomb_product
from .operators import (
    KernelOperator,
    density_of,
    exchange_kernel,
    exchange_pairing,
    potential_operator,
    q_norm,
)

__all__ = [
    "ADMISSIBILITY_TOL",
    "EnergyBreakdown",
    "kinetic_term",
    "bdf_energy",
    "mean_field_operator",
    "expand_around",
    "is_admissible",
    "random_admissible",
    "lower_bound_check",
    "gap_lower_bound",
    "kato_diagnostic",
]

ADMISSIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class EnergyBreakdown:
    """Terms of the vacuum energy.

    Attributes
    ----------
    kinetic : float
        ``tr(|D0| Gamma++) - tr(|D0| Gamma--)``.
    direct_external : float
        ``-alpha D(rho, n)``.
    direct_self : float
        ``alpha/2 D(rho, rho)``.
    exchange : float
        ``-alpha/2 \\iint |Gamma(x, y)|^2 / |x - y|``; zero when exchange is off.
    total : float
    """

    kinetic: float
    direct_external: float
    direct_self: float
    exchange: float
    total: float

    @property
    def direct(self):
        return self.direct_external + self.direct_self

    def to_dict(self):
        return asdict(self)


def kinetic_term(gamma, projector=False):
    """Free-energy part ``tr(|D0| Gamma++) - tr(|D0| Gamma--)``.

    Both ``|D0|`` and ``P0`` are block-diagonal in momentum, so only the
    diagonal blocks of ``Gamma`` enter:
    ``sum_p E(p) Tr[(L+(p) - L-(p)) Gamma(p, p)] = sum_p Tr[D0(p) Gamma(p, p)]``.

    Parameters
    ----------
    gamma : KernelOperator
    projector : bool
        ``gamma`` is a difference of projectors ``P - P0``.  Then
        ``Gamma++ - Gamma--`` equals the diagonal blocks of ``Gamma^2`` and
        the term is evaluated as ``tr(|D0| Gamma^2)``, a sum of non-negative
        terms free of the cancellation between ``P`` and ``P0``.
    """
    lat = gamma.lattice
    if projector:
        weight = np.repeat(lat.mode_energy, 4)
        return float(weight @ np.sum(np.abs(gamma.matrix) ** 2, axis=1))
    idx = np.arange(lat.n_modes)
    diag = gamma.blocks[idx, :, idx, :]
    return float(np.real(np.einsum("iab,iba->", d0_block(lat.modes), diag)))


def bdf_energy(gamma, n, alpha, exchange=True, r_gamma=None, projector=False):
    """Evaluate the energy of a density-matrix perturbation ``Gamma``.

    Parameters
    ----------
    gamma : KernelOperator
        Hermitian perturbation of the free vacuum ``P0``.
    n : DensityField
        External charge density.
    alpha : float
        Coupling constant, non-negative.
    exchange : bool
        Include the exchange term; ``False`` gives the reduced functional.
    r_gamma : KernelOperator, optional
        Precomputed exchange kernel of ``gamma``.
    projector : bool
        ``gamma`` is a difference of projectors; see :func:`kinetic_term`.

    Returns
    -------
    EnergyBreakdown
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    gamma.lattice.check_same(n.lattice)
    rho = density_of(gamma)
    kin = kinetic_term(gamma, projector)
    ext = -alpha * coulomb_product(rho, n)
    self_ = 0.5 * alpha * coulomb_product(rho, rho)
    exch = -0.5 * alpha * exchange_pairing(gamma, r_gamma) if exchange else 0.0
    return EnergyBreakdown(kin, ext, self_, exch, kin + ext + self_ + exch)


def mean_field_operator(q, rho_total, alpha, exchange=True, d0=None, r_q=None):
    """``D0 + alpha (rho' * 1/|x|) - alpha Q(x, y)/|x - y|``.

    Parameters
    ----------
    q : KernelOperator
    rho_total : DensityField
        Total density ``rho'`` (induced minus external) producing the potential.
    alpha : float
    exchange : bool
        Drop the exchange kernel when ``False``.
    r_q : KernelOperator, optional
        Precomputed exchange kernel of ``q``.
    """
    lat = q.lattice
    if d0 is None:
        d0 = free_operator(lat)
    mat = d0.matrix + alpha * potential_operator(rho_total).matrix
    if exchange and alpha != 0:
        if r_q is None:
            r_q = exchange_kernel(q)
        mat = mat - alpha * r_q.matrix
    return KernelOperator(lat, mat)


def expand_around(q, gamma, n, alpha, exchange=True):
    """Residual of the exact quadratic expansion of the energy around ``Q``.

    ``E(Q + gamma) = E(Q) + tr(D_Q gamma) + alpha/2 D(rho_gamma, rho_gamma)
    - alpha/2 \\iint |gamma|^2 / |x - y|`` with ``D_Q`` built from
    ``rho_Q - n``; the plain trace stands in for the ``P0``-trace.

    Returns
    -------
    residual : float
        Absolute difference between the two sides.
    details : dict
        Both sides and ``E(Q)``.
    """
    e_q = bdf_energy(q, n, alpha, exchange).total
    e_sum = bdf_energy(q + gamma, n, alpha, exchange).total
    rho_gamma = density_of(gamma)
    dq = mean_field_operator(q, density_of(q) - n, alpha, exchange)
    linear = float(np.real(np.vdot(dq.matrix.conj().T, gamma.matrix)))
    quad = 0.5 * alpha * coulomb_product(rho_gamma, rho_gamma)
    if exchange:
        quad -= 0.5 * alpha * exchange_pairing(gamma)
    rhs = e_q + linear + quad
    return abs(e_sum - rhs), {"lhs": e_sum, "rhs": rhs, "energy_q": e_q, "linear": linear}


def is_admissible(gamma, p0=None, tol=ADMISSIBILITY_TOL):
    """``-P0 <= Gamma <= 1 - P0`` checked on the spectrum of ``P0 + Gamma``."""
    if p0 is None:
        p0 = p0_projector(gamma.lattice)
    w = linalg.eigh(p0.matrix + gamma.matrix, eigvals_only=True, driver="evr")
    return bool(w[0] >= -tol and w[-1] <= 1.0 + tol)


def random_admissible(lattice, rng, scale=0.1, p0=None):
    """Admissible perturbation from clamping ``P0 + scale H`` to ``[0, 1]``.

    ``H`` is a random Hermitian operator of unit Frobenius norm.
    """
    from .operators import random_hermitian

    if p0 is None:
        p0 = p0_projector(lattice)
    h = random_hermitian(lattice, rng, scale)
    w, u = linalg.eigh(p0.matrix + h.matrix, driver="evr")
    w = np.clip(w, 0.0, 1.0)
    g = (u * w) @ u.conj().T
    g = 0.5 * (g + g.conj().T)
    return KernelOperator(lattice, g - p0.matrix)


def lower_bound_check(gamma, n, alpha, exchange=True, tol=1e-10, p0=None):
    """Check ``E(Gamma) + alpha/2 D(n, n) >= -tol`` for admissible ``Gamma``.

    Returns
    -------
    dict
        ``admissible`` and ``bound_holds`` are reported separately.
    """
    if alpha > 4.0 / np.pi:
        raise ValueError("the lower bound needs alpha <= 4/pi")
    admissible = is_admissible(gamma, p0)
    e = bdf_energy(gamma, n, alpha, exchange).total
    margin = e + 0.5 * alpha * coulomb_product(n, n)
    return {
        "admissible": admissible,
        "bound_holds": bool(margin >= -tol),
        "energy": e,
        "margin": margin,
    }


def gap_lower_bound(q, rho_total, alpha, c_r=None):
    """Lower bound ``1 - alpha (2 sqrt(pi) ||rho'||_C + sqrt(2) C_R ||Q||_Q)`` on ``|D_Q|``.

    Returns ``None`` when the bracket is not positive.
    """
    from .certificate import c_r as _c_r

    if c_r is None:
        c_r = _c_r()
    val = 1.0 - alpha * (2.0 * np.sqrt(np.pi) * c_norm(rho_total) + np.sqrt(2.0) * c_r * q_norm(q))
    return val if val > 0 else None


def kato_diagnostic(q, slack=0.05):
    """Compare ``<Q, R_Q>`` with ``(pi/2) tr(|D0| Q^2)``.

    The inequality holds in the continuum; on the lattice it is reported,
    not enforced.  ``holds`` allows ``slack`` relative excess.
    """
    lhs = exchange_pairing(q)
    absd = abs_free_operator(q.lattice).matrix
    rhs = 0.5 * np.pi * float(np.real(np.trace(absd @ q.matrix @ q.matrix)))
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= (1.0 + slack) * rhs)}

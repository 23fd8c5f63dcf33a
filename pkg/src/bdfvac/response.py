"""Linear vacuum response and perturbative terms of the spectral projector.

The response function ``B(k, cutoff)`` multiplies a total density at first
order: the induced density is ``-B(k) rho'(k)``.  Higher orders of the
projector are obtained from the resolvent expansion

    Q_n = -(1/2pi) \\int d eta  G [(R - phi') G]^n,   G = (D0 + i eta)^-1,

evaluated with Gauss-Legendre nodes after the substitution ``eta = tan(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dirac import IDENTITY, d0_block, pair_trace
from .exceptions import QuadratureError
from .operators import KernelOperator, density_of, exchange_kernel, potential_operator

__all__ = [
    "ResponseTable",
    "b_lambda_1d",
    "b_lambda_3d",
    "b_lambda_zero_closed",
    "b_lambda_zero_asymptotic",
    "dressed_alpha",
    "response_on_lattice",
    "lattice_response",
    "first_order_density",
    "first_order_potential_form",
    "perturbative_term",
    "order_one_potential_closed",
    "order_one_exchange_closed",
    "furry_check",
    "response_table",
]

_QUAD_EPSREL = 1e-11


def _check_cutoff(cutoff):
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")


def b_lambda_1d(k_abs, cutoff):
    """Response function from its one-dimensional integral representation.

    ``B(k) = (1/pi) \\int_0^{L/E(L)} (z^2 - z^4/3)/(1 - z^2) dz / (1 + k^2 (1 - z^2)/4)``.

    Parameters
    ----------
    k_abs : float or array_like
        Momentum modulus.
    cutoff : float
        Ultraviolet cutoff, positive.
    """
    _check_cutoff(cutoff)
    # z = tanh(s) removes the 1/(1 - z^2) endpoint singularity; z = L/E(L) maps to asinh(L).
    top = np.arcsinh(cutoff)

    def one(k):
        k2 = k * k

        def f(s):
            t = np.tanh(s)
            sech2 = 1.0 / np.cosh(s) ** 2
            return (t * t - t**4 / 3.0) / (1.0 + 0.25 * k2 * sech2)

        val, _ = integrate.quad(f, 0.0, top, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=200)
        return val / np.pi

    k_arr = np.asarray(k_abs, dtype=float)
    if k_arr.ndim == 0:
        return one(float(k_arr))
    return np.array([one(k) for k in k_arr.ravel()]).reshape(k_arr.shape)


_GL_COS = np.polynomial.legendre.leggauss(96)


def b_lambda_3d(k, cutoff):
    """Response function from the three-dimensional integral over the ball.

    The integrand is written in a cancellation-free form,
    ``E+ E- - (l+k/2).(l-k/2) - 1 = |k|^2 (1 + |l|^2 sin^2) / (E+ E- + |l|^2 - |k|^2/4 + 1)``,
    and integrated radially with adaptive quadrature and in the polar angle
    around ``k`` with Gauss-Legendre nodes.

    Parameters
    ----------
    k : float or array_like, shape (3,)
        Momentum modulus or vector; must be non-zero.
    cutoff : float
    """
    _check_cutoff(cutoff)
    k_abs = float(np.linalg.norm(k))
    if k_abs == 0.0:
        raise ValueError("the three-dimensional form needs k != 0")
    nodes, weights = _GL_COS
    q = 0.25 * k_abs * k_abs

    def radial(r):
        base = 1.0 + r * r + q
        cross = r * k_abs * nodes
        ep = np.sqrt(base + cross)
        em = np.sqrt(base - cross)
        prod = ep * em
        num = 1.0 + r * r * (1.0 - nodes * nodes)
        den = (prod + r * r - q + 1.0) * prod * (ep + em)
        return r * r * np.dot(weights, num / den)

    val, _ = integrate.quad(radial, 0.0, cutoff, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
    return 2.0 * val / np.pi


def b_lambda_zero_closed(cutoff):
    """Exact ``B(0)``: ``(1/pi)[z^3/9 - 2z/3 + (2/3) artanh z]`` at ``z = L/E(L)``."""
    _check_cutoff(cutoff)
    z = cutoff / np.sqrt(1.0 + cutoff * cutoff)
    return (z**3 / 9.0 - 2.0 * z / 3.0 + 2.0 / 3.0 * np.arctanh(z)) / np.pi


def b_lambda_zero_asymptotic(cutoff):
    """Large-cutoff form ``(2/3pi) log L - 5/(9pi) + (2/3pi) log 2``."""
    _check_cutoff(cutoff)
    return (2.0 * np.log(cutoff) - 5.0 / 3.0 + 2.0 * np.log(2.0)) / (3.0 * np.pi)


def dressed_alpha(alpha, cutoff):
    """Effective coupling ``alpha / (1 + (2 alpha / 3 pi) log L)``."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    return alpha / (1.0 + 2.0 * alpha * np.log(cutoff) / (3.0 * np.pi))


def response_on_lattice(lattice, cutoff=None):
    """Continuum ``B(|k|)`` sampled on ``lattice.diff_modes``.

    Each distinct ``|k|`` is integrated once.
    """
    if cutoff is None:
        cutoff = lattice.cutoff
    sq = np.round(lattice.diff_sq, 12)
    uniq, inv = np.unique(sq, return_inverse=True)
    vals = b_lambda_1d(np.sqrt(uniq), cutoff)
    return np.asarray(vals)[inv]


def lattice_response(lattice):
    """Lattice analogue of ``B``: the exact first-order response of the discrete model.

    ``B_lat(k) = (1 / pi^2 |k|^2) dp^3 sum_{p - q = k} Tr[L+(p) L-(q)] / (E(p) + E(q))``;
    the ``k = 0`` entry is set to zero.
    """
    modes = lattice.modes
    e = lattice.mode_energy
    pt = pair_trace(modes[:, None, :], modes[None, :, :])
    vals = (pt / (e[:, None] + e[None, :])).ravel()
    sums = np.bincount(lattice.pair_diff.ravel(), weights=vals, minlength=lattice.n_diff)
    out = np.zeros(lattice.n_diff)
    nz = lattice.diff_sq > 0
    out[nz] = lattice.cell_volume * sums[nz] / (np.pi**2 * lattice.diff_sq[nz])
    return out


def first_order_density(rho_prime, cutoff=None):
    """Linear induced density ``-B(|k|) rho'(k)`` with the continuum response."""
    return rho_prime.multiply(-response_on_lattice(rho_prime.lattice, cutoff))


def first_order_potential_form(phi_prime, cutoff=None):
    """The same density written through the potential: ``-(1/4pi) phi'(k) |k|^2 B(k)``."""
    lat = phi_prime.lattice
    b = response_on_lattice(lat, cutoff)
    return phi_prime.multiply(-lat.diff_sq * b / (4.0 * np.pi))


def _resolvent_blocks(lattice):
    blocks = d0_block(lattice.modes)
    e2 = lattice.mode_energy**2
    return blocks, e2


def _perturbation_matrix(q, rho_prime, exchange):
    lat = (q if q is not None else rho_prime).lattice
    mat = np.zeros((lat.dim, lat.dim), dtype=complex)
    if q is not None and exchange:
        mat += exchange_kernel(q).matrix
    if rho_prime is not None:
        mat -= potential_operator(rho_prime).matrix
    return lat, mat


def _eta_integral(lattice, x, order, nodes):
    m = lattice.n_modes
    d = 4 * m
    d0, e2 = _resolvent_blocks(lattice)
    theta, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * np.pi * theta
    w = 0.5 * np.pi * w
    # Column blocks of X, shape (M, 4M, 4), so X G is one batched matmul.
    x_cols = np.ascontiguousarray(x.reshape(d, m, 4).transpose(1, 0, 2))
    acc = np.zeros((m, 4, d), dtype=complex)
    for th, wt in zip(theta, w):
        eta = np.tan(th)
        g = (d0 - 1j * eta * IDENTITY) / (e2 + eta * eta)[:, None, None]
        xg = np.matmul(x_cols, g).transpose(1, 0, 2).reshape(d, d)
        chain = xg
        for _ in range(order - 1):
            chain = xg @ chain
        acc += (wt / np.cos(th) ** 2) * np.matmul(g, chain.reshape(m, 4, d))
    return -acc.reshape(d, d) / (2.0 * np.pi)


def perturbative_term(
    order, q=None, rho_prime=None, exchange=True, nodes=64, tol=1e-11, max_nodes=4096,
    return_info=False,
):
    """Order-``n`` term of the projector expansion around ``P0``.

    Parameters
    ----------
    order : int
        Power ``n >= 1`` of the perturbation ``R_Q - phi'``.
    q : KernelOperator, optional
        Source of the exchange part ``R_Q``.
    rho_prime : DensityField, optional
        Total density whose Coulomb potential is ``phi'``.
    exchange : bool
        Ignore ``q`` when ``False``.
    nodes : int
        Initial number of Gauss-Legendre nodes; doubled until two successive
        results differ by at most ``tol`` relative to their size.

    return_info : bool
        Also return the final node count and relative change.

    Returns
    -------
    KernelOperator or (KernelOperator, dict)

    Raises
    ------
    QuadratureError
        If ``max_nodes`` is reached before the tolerance.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if q is None and rho_prime is None:
        raise ValueError("need q or rho_prime")
    lat, x = _perturbation_matrix(q, rho_prime, exchange)
    prev = _eta_integral(lat, x, order, nodes)
    err = np.inf
    while nodes < max_nodes:
        nodes *= 2
        cur = _eta_integral(lat, x, order, nodes)
        scale = max(np.max(np.abs(cur)), np.finfo(float).tiny)
        err = np.max(np.abs(cur - prev)) / scale
        prev = cur
        if err <= tol:
            op = KernelOperator(lat, cur)
            if return_info:
                return op, {"nodes": nodes, "relative_change": float(err)}
            return op
    raise QuadratureError(f"eta quadrature did not settle with {max_nodes} nodes", err)



def order_one_potential_closed(rho_prime):
    """Closed form of the first-order potential term.

    ``Q^(p, q) = 2^(-5/2) pi^(-3/2) phi'(p - q) M(p, q)``; the term enters the
    projector with a positive sign relative to ``phi'``.
    """
    from .dirac import m_matrix

    lat = rho_prime.lattice
    phi = 4.0 * np.pi * rho_prime.values * lat.coulomb_weight
    modes = lat.modes
    m = m_matrix(modes[:, None, :], modes[None, :, :])
    coef = 2.0**-2.5 * np.pi**-1.5 * phi[lat.pair_diff] * lat.cell_volume
    out = coef[:, :, None, None] * m
    return KernelOperator(lat, out.transpose(0, 2, 1, 3).reshape(lat.dim, lat.dim))


def order_one_exchange_closed(r):
    """Closed form of the first-order exchange term.

    ``Q^(p, q) = -(1/2)(E(p) + E(q))^-1 [S(p) R^(p, q) S(q) - R^(p, q)]`` with
    ``S(p) = (alpha.p + beta)/E(p)``.
    """
    lat = r.lattice
    e = lat.mode_energy
    s = d0_block(lat.modes) / e[:, None, None]
    rb = r.blocks
    sandwich = np.einsum("iab,ibjc,jcd->iajd", s, rb, s)
    denom = (e[:, None] + e[None, :])[:, None, :, None]
    out = -0.5 * (sandwich - rb) / denom
    return KernelOperator(lat, out.reshape(lat.dim, lat.dim))


def furry_check(rho_prime, **kwargs):
    """Largest modulus of the second-order density from a pure potential.

    The even-order pure-potential densities vanish identically, so this
    returns a roundoff-level number.
    """
    q2 = perturbative_term(2, None, rho_prime, **kwargs)
    return float(np.max(np.abs(density_of(q2).values)))


@dataclass
class ResponseTable:
    """Samples of the response function at a fixed cutoff.

    Attributes
    ----------
    cutoff : float
    k_abs : ndarray
    b_1d : ndarray
    b_3d : ndarray
    method : str
        ``"1d"``, ``"3d"`` or ``"both"``.
    """

    cutoff: float
    k_abs: np.ndarray
    b_1d: np.ndarray
    b_3d: np.ndarray = field(default=None)
    method: str = "both"

    @property
    def rel_diff(self):
        if self.b_3d is None:
            return None
        return (self.b_3d - self.b_1d) / self.b_1d

    def rows(self):
        rel = self.rel_diff
        for i, k in enumerate(self.k_abs):
            yield {
                "k_abs": float(k),
                "lambda": float(self.cutoff),
                "B_1d": float(self.b_1d[i]),
                "B_3d": float(self.b_3d[i]) if self.b_3d is not None else float("nan"),
                "rel_diff": float(rel[i]) if rel is not None else float("nan"),
            }


def response_table(cutoff, kmax, points, method="both"):
    """Evaluate ``B`` on ``points`` equally spaced moduli in ``(0, kmax]``."""
    if points < 1:
        raise ValueError("points must be positive")
    if not kmax > 0:
        raise ValueError("kmax must be positive")
    ks = kmax * np.arange(1, points + 1) / points
    b1 = np.asarray(b_lambda_1d(ks, cutoff))
    b3 = None
    if method in ("3d", "both"):
        b3 = np.array([b_lambda_3d(k, cutoff) for k in ks])
    return ResponseTable(float(cutoff), ks, b1, b3, method)


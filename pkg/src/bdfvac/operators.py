"""Dense kernel operators on the spinor lattice space.

A :class:`KernelOperator` stores the matrix ``dp^3 * A^(p, q)`` in a
``(4M, 4M)`` array whose row and column index is ``4 * mode + spinor``.
With this scaling the composition of kernels is a plain matrix product, the
operator trace is the matrix trace, and the Hilbert-Schmidt norm is the
Frobenius norm.
"""

from __future__ import annotations

import struct
import weakref
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .dirac import CONJUGATION
from .lattice import FOURIER_NORM, DensityField, LatticeSpec, build_lattice

__all__ = [
    "KernelOperator",
    "p0_trace",
    "vacuum_charge",
    "density_of",
    "potential_operator",
    "exchange_kernel",
    "exchange_pairing",
    "cell_average_inverse_square",
    "q_norm",
    "r_norm",
    "x_norm",
    "charge_conjugate",
    "random_hermitian",
    "save_operator",
    "load_operator",
    "SNAPSHOT_MAGIC",
]

CHARGE_INTEGER_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Operator on the lattice spinor space.

    Parameters
    ----------
    lattice : Lattice
    matrix : ndarray, shape (4M, 4M)
        ``dp^3`` times the momentum kernel.
    """

    lattice: Lattice
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.lattice.dim
        if mat.shape != (d, d):
            raise ValueError(f"expected a ({d}, {d}) matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def zeros(cls, lattice):
        return cls(lattice, np.zeros((lattice.dim, lattice.dim), dtype=complex))

    @classmethod
    def identity(cls, lattice):
        return cls(lattice, np.eye(lattice.dim, dtype=complex))

    @property
    def blocks(self):
        """View of shape ``(M, 4, M, 4)``."""
        m = self.lattice.n_modes
        return self.matrix.reshape(m, 4, m, 4)

    def kernel(self):
        """Momentum kernel ``A^(p, q)`` as an ``(M, 4, M, 4)`` array."""
        return self.blocks / self.lattice.cell_volume

    def _other(self, other):
        if not isinstance(other, KernelOperator):
            return None
        self.lattice.check_same(other.lattice)
        return other.matrix

    def __add__(self, other):
        m = self._other(other)
        if m is None:
            return NotImplemented
        return KernelOperator(self.lattice, self.matrix + m)

    def __sub__(self, other):
        m = self._other(other)
        if m is None:
            return NotImplemented
        return KernelOperator(self.lattice, self.matrix - m)

    def __neg__(self):
        return KernelOperator(self.lattice, -self.matrix)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return KernelOperator(self.lattice, scalar * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.compose(other)

    def compose(self, other):
        m = self._other(other)
        if m is None:
            raise TypeError("can only compose with another KernelOperator")
        return KernelOperator(self.lattice, self.matrix @ m)

    def adjoint(self):
        return KernelOperator(self.lattice, self.matrix.conj().T)

    def trace(self):
        return complex(np.trace(self.matrix))

    def hs_norm(self):
        return float(np.linalg.norm(self.matrix))

    def frobenius_inner(self, other):
        """``tr(A^* B)``."""
        m = self._other(other)
        return complex(np.vdot(self.matrix, m))

    def hermitian_defect(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def commutator(self, other):
        m = self._other(other)
        return KernelOperator(self.lattice, self.matrix @ m - m @ self.matrix)


def p0_trace(a, p0):
    """``tr(A++) + tr(A--)`` in the decomposition induced by the projector ``p0``.

    Uses ``tr(A--) = tr(P A P)`` and ``tr(A++) = tr(A) - 2 tr(P A) + tr(P A P)``.
    """
    a.lattice.check_same(p0.lattice)
    p = p0.matrix
    pa = p @ a.matrix
    minus = np.sum(pa * p.T)
    plus = np.trace(a.matrix) - 2.0 * np.trace(pa) + minus
    return float(np.real(plus + minus))


def vacuum_charge(q, p0, tol=CHARGE_INTEGER_TOL):
    """Charge of a projector difference ``Q = P - P0``.

    Returns
    -------
    dict
        ``str`` (the ``p0``-trace of Q), ``cube_trace`` (``tr Q^3``),
        ``trace`` (plain trace), ``integer`` (nearest integer to ``str``) and
        ``is_integer`` (both values within ``tol`` of that integer).
    """
    s = p0_trace(q, p0)
    cube = float(np.real(np.sum((q.matrix @ q.matrix) * q.matrix.T)))
    nearest = int(np.rint(s))
    return {
        "str": s,
        "cube_trace": cube,
        "trace": float(np.real(q.trace())),
        "integer": nearest,
        "is_integer": bool(abs(s - nearest) <= tol and abs(cube - nearest) <= tol),
    }


def density_of(gamma):
    """Fourier transform of the charge density ``tr_C4 Gamma(x, x)``.

    ``rho(k) = (2 pi)^(-3/2) dp^3 sum_{p - q = k} Tr Gamma^(p, q)``.
    """
    lat = gamma.lattice
    tr = np.einsum("iaja->ij", gamma.blocks).ravel()
    flat = lat.pair_diff.ravel()
    vals = np.bincount(flat, weights=tr.real, minlength=lat.n_diff) + 1j * np.bincount(
        flat, weights=tr.imag, minlength=lat.n_diff
    )
    return DensityField(lat, FOURIER_NORM * vals)


def potential_operator(rho):
    """Multiplication by ``rho * 1/|x|`` as a kernel operator.

    Kernel ``(2 pi)^(-3/2) 4 pi rho(p - q) / |p - q|^2`` times the identity
    spinor block; the ``k = 0`` amplitude is dropped.  With this convention
    ``tr(V(rho) gamma) = D(rho_gamma, rho)`` holds exactly on the lattice.
    """
    lat = rho.lattice
    amp = 4.0 * np.pi * FOURIER_NORM * lat.cell_volume * rho.values * lat.coulomb_weight
    v = amp[lat.pair_diff]
    return KernelOperator(lat, np.kron(v, np.eye(4)))


@lru_cache(maxsize=None)
def cell_average_inverse_square():
    """Integral of ``1/|u|^2`` over the unit cube centred at the origin.

    Each face contributes ``(1/2) \\int dy dz / (1/4 + y^2 + z^2)``.
    """
    val, _ = integrate.dblquad(
        lambda z, y: 1.0 / (0.25 + y * y + z * z), -0.5, 0.5, -0.5, 0.5, epsabs=1e-13
    )
    return 3.0 * val


class _ExchangePlan:
    """Index sets grouping mode pairs by their difference ``p - q``."""

    def __init__(self, lattice):
        m = lattice.n_modes
        flat = lattice.pair_diff.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=lattice.n_diff)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        self.groups = []
        for d in range(lattice.n_diff):
            sel = order[bounds[d] : bounds[d + 1]]
            self.groups.append((sel // m, sel % m))
        w = lattice.coulomb_weight.copy()
        w[lattice.zero_diff] = cell_average_inverse_square() / lattice.spacing**2
        self.weight = lattice.cell_volume / (2.0 * np.pi**2) * w[lattice.pair_diff]


_PLANS = weakref.WeakKeyDictionary()


def _plan(lattice):
    plan = _PLANS.get(lattice)
    if plan is None:
        plan = _ExchangePlan(lattice)
        _PLANS[lattice] = plan
    return plan


def exchange_kernel(q):
    """Kernel of ``Q(x, y) / |x - y|``.

    ``R^(p, q) = (1 / 2 pi^2) dl^3 sum_l w(l) Q^(p - l, q - l)``, with
    ``w(l) = 1/|l|^2`` for ``l != 0`` and, at ``l = 0``, the average of
    ``1/|l|^2`` over the lattice cell.  Arguments outside the cutoff ball
    contribute zero.  Pairs sharing ``p - q`` form independent blocks so the
    sum is one small matrix product per difference momentum.
    """
    lat = q.lattice
    plan = _plan(lat)
    src = q.blocks
    out = np.zeros_like(src)
    for rows, cols in plan.groups:
        sub = src[rows, :, cols, :].reshape(rows.size, 16)
        w = plan.weight[np.ix_(rows, rows)]
        out[rows, :, cols, :] = (w @ sub).reshape(rows.size, 4, 4)
    return KernelOperator(lat, out.reshape(lat.dim, lat.dim))


def exchange_pairing(gamma, r_gamma=None):
    """``\\iint |Gamma(x, y)|^2 / |x - y|``, evaluated as ``tr(Gamma^* R_Gamma)``."""
    if r_gamma is None:
        r_gamma = exchange_kernel(gamma)
    return float(np.real(gamma.frobenius_inner(r_gamma)))


def _block_norm_sq(op):
    return np.sum(np.abs(op.blocks) ** 2, axis=(1, 3))


def q_norm(q):
    """``(sum E(p - q)^2 E(p + q) |Q^|^2 dp dq)^(1/2)`` on the lattice."""
    lat = q.lattice
    w = lat.pair_diff_energy**2 * lat.pair_sum_energy
    return float(np.sqrt(np.sum(w * _block_norm_sq(q))))


def r_norm(r):
    """``(sum E(p - q)^2 / E(p + q) |R^|^2 dp dq)^(1/2)`` on the lattice."""
    lat = r.lattice
    w = lat.pair_diff_energy**2 / lat.pair_sum_energy
    return float(np.sqrt(np.sum(w * _block_norm_sq(r))))


def x_norm(q, rho, c_r=None):
    """Product norm ``C_R sqrt(2) ||Q||_Q + 2 sqrt(pi) ||rho||_C``."""
    from .certificate import c_r as _c_r
    from .lattice import c_norm

    if c_r is None:
        c_r = _c_r()
    return float(c_r * np.sqrt(2.0) * q_norm(q) + 2.0 * np.sqrt(np.pi) * c_norm(rho))


def charge_conjugate(q):
    """Kernel of ``-C Q C^-1``: ``-U conj(Q^(-p, -q)) U^-1`` with ``U = i beta alpha_2``."""
    lat = q.lattice
    neg = lat.neg_mode
    b = np.conj(q.blocks[neg][:, :, neg, :])
    u = CONJUGATION
    out = -np.einsum("ab,ibjc,cd->iajd", u, b, u.conj().T)
    return KernelOperator(lat, out.reshape(lat.dim, lat.dim))


def random_hermitian(lattice, rng, scale=1.0):
    """Hermitian operator with Gaussian entries of Frobenius size ``~scale``."""
    d = lattice.dim
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = 0.5 * (a + a.conj().T)
    return KernelOperator(lattice, scale * h / np.linalg.norm(h))


SNAPSHOT_MAGIC = b"BDFKOP\x00\x01"
_SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIddQ")


def save_operator(op, path):
    """Write a binary snapshot.

    Layout, little-endian: 8-byte magic, uint32 version, uint32
    points_per_axis, float64 spacing, float64 cutoff, uint64 mode count, then
    the ``(4M, 4M)`` complex128 matrix in row-major order.
    """
    spec = op.lattice.spec
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                SNAPSHOT_MAGIC,
                _SNAPSHOT_VERSION,
                int(spec.points_per_axis),
                float(spec.spacing),
                float(spec.cutoff),
                int(op.lattice.n_modes),
            )
        )
        fh.write(np.ascontiguousarray(op.matrix, dtype="<c16").tobytes())


def load_operator(path, lattice=None):
    """Read a snapshot written by :func:`save_operator`.

    Parameters
    ----------
    lattice : Lattice, optional
        Reuse this lattice; its specification must match the header.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated snapshot header")
        magic, version, npa, spacing, cutoff, n_modes = _HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC or version != _SNAPSHOT_VERSION:
            raise ValueError("not a kernel-operator snapshot")
        spec = LatticeSpec(npa, spacing, cutoff)
        if lattice is None:
            lattice = build_lattice(spec)
        elif lattice.spec != spec:
            raise ValueError("snapshot lattice does not match the supplied lattice")
        if lattice.n_modes != n_modes:
            raise ValueError("snapshot mode count does not match the lattice")
        d = 4 * n_modes
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != d * d:
        raise ValueError("snapshot payload has the wrong size")
    return KernelOperator(lattice, data.reshape(d, d).astype(complex))


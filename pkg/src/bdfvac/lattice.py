"""Discrete momentum lattice restricted to a cutoff ball.

Operators act on spinor wavefunctions whose Fourier transform is supported
in the ball ``|p| <= cutoff``.  The ball is sampled on a cubic grid of step
``spacing``; grid indices run over ``-N/2 .. N/2`` on each axis so the grid
is symmetric under ``p -> -p``.  Densities live on the set of difference
momenta ``k = p - q`` and use the convention
``f^(k) = (2 pi)^(-3/2) \\int f(x) exp(-i k.x) dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import LatticeMismatch

__all__ = [
    "LatticeSpec",
    "Lattice",
    "DensityField",
    "energy_scale",
    "build_lattice",
    "coulomb_product",
    "c_norm",
    "c_dual_norm",
    "y_norm",
    "coulomb_potential",
    "source_density",
    "random_density",
]

FOURIER_NORM = (2.0 * np.pi) ** -1.5


def energy_scale(k):
    """Relativistic energy ``sqrt(1 + |k|^2)``.

    Parameters
    ----------
    k : array_like, shape (..., 3)
        Momentum vector(s).

    Returns
    -------
    ndarray or float
        Same leading shape as ``k``; every entry is at least 1.
    """
    k = np.asarray(k, dtype=float)
    return np.sqrt(1.0 + np.sum(k * k, axis=-1))


@dataclass(frozen=True)
class LatticeSpec:
    """Grid parameters.

    Parameters
    ----------
    points_per_axis : int
        Even number ``N``; grid indices run over ``-N/2 .. N/2``.
    spacing : float
        Momentum step between neighbouring grid points.
    cutoff : float
        Radius of the momentum ball kept in the Hilbert space.
    """

    points_per_axis: int
    spacing: float
    cutoff: float

    def validate(self):
        n = self.points_per_axis
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n <= 0:
            raise ValueError(f"points_per_axis must be a positive integer, got {n!r}")
        if n % 2:
            raise ValueError(f"points_per_axis must be even, got {n}")
        if not np.isfinite(self.spacing) or self.spacing <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.isfinite(self.cutoff) or self.cutoff < 0:
            raise ValueError(f"cutoff must be non-negative, got {self.cutoff}")
        half_extent = 0.5 * n * self.spacing
        if self.cutoff > half_extent * (1 + 1e-12):
            raise ValueError(
                f"cutoff {self.cutoff} exceeds half the grid extent {half_extent}"
            )
        return self

    def to_dict(self):
        return {
            "points_per_axis": int(self.points_per_axis),
            "spacing": float(self.spacing),
            "cutoff": float(self.cutoff),
        }


@dataclass(frozen=True, eq=False)
class Lattice:
    """Modes inside the cutoff ball and their difference momenta.

    Attributes
    ----------
    spec : LatticeSpec
    mode_index : ndarray of int, shape (M, 3)
        Integer grid coordinates of the modes, sorted lexicographically.
    diff_index : ndarray of int, shape (K, 3)
        Integer coordinates of every reachable ``p - q``, sorted
        lexicographically.
    pair_diff : ndarray of int, shape (M, M)
        ``pair_diff[i, j]`` is the position of ``p_i - p_j`` in ``diff_index``.
    """

    spec: LatticeSpec
    mode_index: np.ndarray
    diff_index: np.ndarray
    pair_diff: np.ndarray = field(repr=False)

    @property
    def spacing(self):
        return self.spec.spacing

    @property
    def cutoff(self):
        return self.spec.cutoff

    @property
    def n_modes(self):
        return self.mode_index.shape[0]

    @property
    def n_diff(self):
        return self.diff_index.shape[0]

    @property
    def dim(self):
        """Dimension of the spinor space, four per mode."""
        return 4 * self.n_modes

    @property
    def cell_volume(self):
        return self.spec.spacing**3

    @cached_property
    def modes(self):
        return self.mode_index * self.spec.spacing

    @cached_property
    def diff_modes(self):
        return self.diff_index * self.spec.spacing

    @cached_property
    def diff_sq(self):
        return np.sum(self.diff_modes**2, axis=1)

    @cached_property
    def zero_diff(self):
        """Position of ``k = 0`` in ``diff_modes``."""
        return int(np.flatnonzero(np.all(self.diff_index == 0, axis=1))[0])

    @cached_property
    def coulomb_weight(self):
        """``1/|k|^2`` on ``diff_modes`` with the ``k = 0`` entry set to zero."""
        w = np.zeros(self.n_diff)
        nz = self.diff_sq > 0
        w[nz] = 1.0 / self.diff_sq[nz]
        return w

    @cached_property
    def mode_energy(self):
        return energy_scale(self.modes)

    @cached_property
    def diff_energy(self):
        return energy_scale(self.diff_modes)

    @cached_property
    def pair_diff_energy(self):
        """``E(p - q)`` for every ordered mode pair, shape (M, M)."""
        return self.diff_energy[self.pair_diff]

    @cached_property
    def pair_sum_energy(self):
        """``E(p + q)`` for every ordered mode pair, shape (M, M)."""
        return energy_scale(self.modes[:, None, :] + self.modes[None, :, :])

    @cached_property
    def neg_mode(self):
        """Permutation sending mode ``p`` to the position of ``-p``."""
        return _negation_permutation(self.mode_index)

    @cached_property
    def neg_diff(self):
        """Permutation sending ``k`` to the position of ``-k``."""
        return _negation_permutation(self.diff_index)

    def same_as(self, other):
        return self is other or (
            self.spec == other.spec and self.n_modes == other.n_modes
        )

    def check_same(self, other):
        if not self.same_as(other):
            raise LatticeMismatch("objects live on different lattices")

    def info(self):
        """Summary dictionary used by the command line."""
        return {
            **self.spec.to_dict(),
            "n_modes": int(self.n_modes),
            "n_diff_modes": int(self.n_diff),
            "spinor_dim": int(self.dim),
            "mode_order": "lexicographic in (p1, p2, p3)",
        }


def _negation_permutation(index):
    lookup = {tuple(v): i for i, v in enumerate(index)}
    return np.array([lookup[tuple(-v)] for v in index], dtype=np.intp)


def build_lattice(spec):
    """Enumerate modes and difference momenta for a grid specification.

    Modes are the grid points with ``|p| <= cutoff`` (boundary included),
    in lexicographic order of their integer coordinates.

    Parameters
    ----------
    spec : LatticeSpec

    Returns
    -------
    Lattice
    """
    spec.validate()
    half = spec.points_per_axis // 2
    axis = np.arange(-half, half + 1)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    radius_sq = (spec.cutoff / spec.spacing) ** 2
    keep = np.sum(grid**2, axis=1) <= radius_sq * (1 + 1e-12) + 1e-12
    modes = grid[keep]

    # Difference vectors are encoded as base-(4*half+1) integers; the
    # encoding preserves lexicographic order so np.unique sorts correctly.
    base = 4 * half + 1
    diffs = (modes[:, None, :] - modes[None, :, :]) + 2 * half
    codes = (diffs[..., 0] * base + diffs[..., 1]) * base + diffs[..., 2]
    uniq, inverse = np.unique(codes.ravel(), return_inverse=True)
    diff_index = np.stack(
        [uniq // (base * base), (uniq // base) % base, uniq % base], axis=1
    ) - 2 * half
    pair_diff = inverse.reshape(modes.shape[0], modes.shape[0]).astype(np.intp)
    return Lattice(spec, modes.astype(np.int64), diff_index.astype(np.int64), pair_diff)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Complex Fourier amplitudes on the difference momenta of a lattice.

    The ``k = 0`` value is stored but excluded from every Coulomb sum.
    """

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.lattice.n_diff,):
            raise ValueError(
                f"expected {self.lattice.n_diff} values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, lattice):
        return cls(lattice, np.zeros(lattice.n_diff, dtype=complex))

    def _coerce(self, other):
        if isinstance(other, DensityField):
            self.lattice.check_same(other.lattice)
            return other.values
        return NotImplemented

    def __add__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return DensityField(self.lattice, self.values + v)

    def __sub__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return DensityField(self.lattice, self.values - v)

    def __neg__(self):
        return DensityField(self.lattice, -self.values)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return DensityField(self.lattice, scalar * self.values)

    __rmul__ = __mul__

    def multiply(self, factor):
        """Pointwise product with a real multiplier sampled on ``diff_modes``."""
        return DensityField(self.lattice, np.asarray(factor) * self.values)

    def reality_defect(self):
        """``max |f(-k) - conj f(k)|``; zero for the transform of a real function."""
        return float(np.max(np.abs(self.values[self.lattice.neg_diff] - np.conj(self.values))))

    def total_charge(self):
        """Integral of the density, recovered as ``(2 pi)^(3/2) f(0)``."""
        return float(np.real(self.values[self.lattice.zero_diff])) / FOURIER_NORM


def coulomb_product(f, g):
    """Lattice Coulomb interaction ``D(f, g)``.

    ``D(f, g) = 4 pi dk^3 sum_{k != 0} conj(f(k)) g(k) / |k|^2``; the real part
    is returned, which is the full value for real densities.
    """
    f.lattice.check_same(g.lattice)
    lat = f.lattice
    s = np.sum(np.conj(f.values) * g.values * lat.coulomb_weight)
    return float(4.0 * np.pi * lat.cell_volume * np.real(s))


def c_norm(rho):
    """Norm ``(dk^3 sum_{k != 0} E(k)^2 |rho(k)|^2 / |k|^2)^(1/2)``."""
    lat = rho.lattice
    w = lat.diff_energy**2 * lat.coulomb_weight
    return float(np.sqrt(lat.cell_volume * np.sum(w * np.abs(rho.values) ** 2)))


def c_dual_norm(zeta):
    """Dual norm ``(dk^3 sum_k |k|^2 |zeta(k)|^2 / E(k)^2)^(1/2)``.

    The ``k = 0`` term carries zero weight.
    """
    lat = zeta.lattice
    w = lat.diff_sq / lat.diff_energy**2
    return float(np.sqrt(lat.cell_volume * np.sum(w * np.abs(zeta.values) ** 2)))


def y_norm(phi):
    """Potential norm ``(dk^3 sum_k |k|^2 E(k)^2 |phi(k)|^2)^(1/2)``."""
    lat = phi.lattice
    w = lat.diff_sq * lat.diff_energy**2
    return float(np.sqrt(lat.cell_volume * np.sum(w * np.abs(phi.values) ** 2)))


def coulomb_potential(rho):
    """Fourier amplitudes of ``rho * 1/|x|``, i.e. ``4 pi rho(k) / |k|^2``.

    The ``k = 0`` amplitude is set to zero.
    """
    return rho.multiply(4.0 * np.pi * rho.lattice.coulomb_weight)


def source_density(lattice, charge=1.0, width=1.0, profile="gaussian"):
    """Smooth external charge density sampled on ``diff_modes``.

    Parameters
    ----------
    lattice : Lattice
    charge : float
        Total charge ``Z``.
    width : float
        Gaussian width ``sigma``; must be positive.
    profile : {"gaussian"}

    Returns
    -------
    DensityField
        ``Z (2 pi)^(-3/2) exp(-sigma^2 |k|^2 / 2)``.
    """
    if profile != "gaussian":
        raise ValueError(f"unknown source profile {profile!r}")
    if not width > 0:
        raise ValueError(f"source width must be positive, got {width}")
    vals = charge * FOURIER_NORM * np.exp(-0.5 * width**2 * lattice.diff_sq)
    return DensityField(lattice, vals.astype(complex))


def random_density(lattice, rng, scale=1.0):
    """Random transform of a real function: ``f(-k) = conj f(k)``."""
    raw = rng.standard_normal(lattice.n_diff) + 1j * rng.standard_normal(lattice.n_diff)
    vals = 0.5 * (raw + np.conj(raw[lattice.neg_diff]))
    return DensityField(lattice, scale * vals)

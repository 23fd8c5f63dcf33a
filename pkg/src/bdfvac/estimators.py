"""Scikit-learn style wrappers around the solver and the linear response."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_density_rows, check_single_source
from .lattice import DensityField, LatticeSpec, build_lattice
from .response import lattice_response, response_on_lattice
from .scf import SolverConfig, solve

__all__ = ["BDFVacuum", "FirstOrderResponse"]


class BDFVacuum(BaseEstimator, TransformerMixin):
    """Self-consistent polarized vacuum for an external density.

    ``fit`` solves for one source; ``transform`` maps each source to the
    induced density ``rho_Q``, warm-starting from the fitted state.

    Parameters
    ----------
    alpha : float
        Coupling constant.
    points_per_axis, spacing, cutoff :
        Momentum lattice.
    scheme : {"plain", "preconditioned"}
    preconditioner : {"lattice", "continuum"}
    exchange : bool
    tol : float
    max_iter : int
    gap_tol : float

    Attributes
    ----------
    lattice_ : Lattice
    Q_ : KernelOperator
        Converged ``P - P0``.
    density_ : DensityField
        Induced density ``rho_Q``.
    total_density_ : DensityField
        ``rho_Q - n``.
    energy_ : EnergyBreakdown
    report_ : SolverReport
    n_iter_ : int
    """

    def __init__(
        self,
        alpha=0.02,
        points_per_axis=8,
        spacing=0.75,
        cutoff=3.0,
        scheme="preconditioned",
        preconditioner="lattice",
        exchange=True,
        tol=1e-8,
        max_iter=200,
        gap_tol=1e-6,
    ):
        self.alpha = alpha
        self.points_per_axis = points_per_axis
        self.spacing = spacing
        self.cutoff = cutoff
        self.scheme = scheme
        self.preconditioner = preconditioner
        self.exchange = exchange
        self.tol = tol
        self.max_iter = max_iter
        self.gap_tol = gap_tol

    def _config(self):
        spec = LatticeSpec(self.points_per_axis, self.spacing, self.cutoff)
        return SolverConfig(
            alpha=self.alpha,
            lattice=spec,
            scheme=self.scheme,
            preconditioner=self.preconditioner,
            exchange=self.exchange,
            tol=self.tol,
            max_iter=self.max_iter,
            gap_tol=self.gap_tol,
        ).validate()

    def _lattice_for(self, config):
        lat = getattr(self, "lattice_", None)
        if lat is not None and lat.spec == config.lattice:
            return lat
        return build_lattice(config.lattice)

    def fit(self, X, y=None):
        """Solve for the source ``X``.

        Raises
        ------
        MaxIterExceeded, Diverged, GapCollapse
            When the iteration does not converge.
        """
        config = self._config()
        lat = self._lattice_for(config)
        n = check_single_source(X, lat)
        report = solve(config, lat, n, verify=False)
        report.raise_for_verdict()
        self.lattice_ = lat
        self.report_ = report
        self.Q_ = report.q
        self.density_ = report.density
        self.total_density_ = self.density_ - n
        self.energy_ = report.energy
        self.n_iter_ = report.iterations
        return self

    def transform(self, X):
        """Induced densities, one row per source."""
        check_is_fitted(self, "Q_")
        rows = check_density_rows(X, self.lattice_)
        config = self._config()
        out = np.empty_like(rows)
        for i, row in enumerate(rows):
            n = DensityField(self.lattice_, row)
            rep = solve(config, self.lattice_, n, initial=(self.Q_, self.total_density_), verify=False)
            rep.raise_for_verdict()
            out[i] = rep.density.values
        return out

    def fit_transform(self, X, y=None):
        self.fit(X)
        return self.density_.values[None, :].copy()


class FirstOrderResponse(BaseEstimator, TransformerMixin):
    """Linear induced density ``-B(k) rho'(k)`` on a lattice.

    Parameters
    ----------
    points_per_axis, spacing, cutoff :
        Momentum lattice.
    kind : {"lattice", "continuum"}
        Exact response of the discrete model, or the continuum function of
        ``|k|`` at the lattice cutoff.

    Attributes
    ----------
    lattice_ : Lattice
    response_ : ndarray
        ``B`` at every difference momentum.
    """

    def __init__(self, points_per_axis=8, spacing=0.75, cutoff=3.0, kind="lattice"):
        self.points_per_axis = points_per_axis
        self.spacing = spacing
        self.cutoff = cutoff
        self.kind = kind

    def fit(self, X=None, y=None):
        if self.kind not in ("lattice", "continuum"):
            raise ValueError(f"kind must be 'lattice' or 'continuum', got {self.kind!r}")
        lat = build_lattice(LatticeSpec(self.points_per_axis, self.spacing, self.cutoff))
        self.lattice_ = lat
        self.response_ = lattice_response(lat) if self.kind == "lattice" else response_on_lattice(lat)
        if X is not None:
            check_density_rows(X, lat)
        return self

    def transform(self, X):
        check_is_fitted(self, "response_")
        return -check_density_rows(X, self.lattice_) * self.response_

"""Momentum-lattice simulator of the mean-field polarized Dirac vacuum."""

from .certificate import Certificate, alpha_b, c_m, c_r, check_conditions, constants_table, inequality_suite
from .dirac import free_operator, p0_projector
from .energy import EnergyBreakdown, bdf_energy, expand_around
from .estimators import BDFVacuum, FirstOrderResponse
from .exceptions import BDFError, Diverged, GapCollapse, LatticeMismatch, MaxIterExceeded, QuadratureError
from .lattice import DensityField, Lattice, LatticeSpec, build_lattice, c_norm, coulomb_product, source_density
from .operators import KernelOperator, density_of, exchange_kernel, load_operator, save_operator
from .response import b_lambda_1d, b_lambda_3d, perturbative_term
from .scf import SolverConfig, SolverReport, SourceSpec, solve

__version__ = "0.1.0"

__all__ = [
    "BDFError",
    "BDFVacuum",
    "Certificate",
    "DensityField",
    "Diverged",
    "EnergyBreakdown",
    "FirstOrderResponse",
    "GapCollapse",
    "KernelOperator",
    "Lattice",
    "LatticeMismatch",
    "LatticeSpec",
    "MaxIterExceeded",
    "QuadratureError",
    "SolverConfig",
    "SolverReport",
    "SourceSpec",
    "alpha_b",
    "b_lambda_1d",
    "b_lambda_3d",
    "bdf_energy",
    "build_lattice",
    "c_m",
    "c_norm",
    "c_r",
    "check_conditions",
    "constants_table",
    "coulomb_product",
    "density_of",
    "exchange_kernel",
    "expand_around",
    "free_operator",
    "inequality_suite",
    "load_operator",
    "p0_projector",
    "perturbative_term",
    "save_operator",
    "solve",
    "source_density",
]

"""Rational-approximation solvers for the spectral fractional Laplacian with
block-encoding and Schrödingerization emulation layers."""

from .grid import GridFunction, GridSpec, LaplacianOperator, discrete_l2_norm, sample_rhs
from .ratapprox import RationalModel, fit_rational, fit_rational_order, spectrum_interval, sup_error
from .refsolve import convergence_study, rational_solution, solve_shifted, spectral_fractional_reference
from .system import CombinedSystem, build_combined, recover_hadamard, solve_combined

__version__ = "0.1.0"

__all__ = [
    "CombinedSystem",
    "GridFunction",
    "GridSpec",
    "LaplacianOperator",
    "RationalModel",
    "build_combined",
    "convergence_study",
    "discrete_l2_norm",
    "fit_rational",
    "fit_rational_order",
    "rational_solution",
    "recover_hadamard",
    "sample_rhs",
    "solve_combined",
    "solve_shifted",
    "spectral_fractional_reference",
    "spectrum_interval",
    "sup_error",
]

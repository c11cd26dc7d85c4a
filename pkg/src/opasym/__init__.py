"""Numerical toolkit for orthonormal polynomials with slowly growing
recurrence coefficients: recurrence evaluation, phase decomposition,
asymptotic-expansion checks, Fourier kernels, limit estimates and the
operator layer on trigonometric signals.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .coeffs import (CoefficientFamily, ConfigError, check_conditions, corpus, custom_table, detour, freud,
                     hermite, power_law, with_rho)
from .recurrence import (EvalTrace, RecurrenceOverflow, cd_residual, christoffel_ratio, eval_nonsymmetric,
                         eval_symmetric, run_recurrence)

__all__ = [
    "BACKEND", "CoefficientFamily", "ConfigError", "EvalTrace", "RecurrenceOverflow", "__version__",
    "cd_residual", "check_conditions", "christoffel_ratio", "corpus", "custom_table", "detour",
    "eval_nonsymmetric", "eval_symmetric", "freud", "hermite", "power_law", "run_recurrence", "with_rho",
]

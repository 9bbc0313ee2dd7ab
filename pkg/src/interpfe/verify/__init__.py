"""Manufactured solutions, error norms and convergence studies."""
from .cases import ManufacturedCase, kirsch_case, make_case
from .norms import displacement_error, error_norms, stress_error
from .study import (CaseResult, ConvergenceReport, convergence_study, elasticity_study,
                    fit_rate, run_case)

__all__ = ["ManufacturedCase", "kirsch_case", "make_case", "error_norms", "stress_error",
           "displacement_error", "CaseResult", "ConvergenceReport", "run_case",
           "convergence_study", "elasticity_study", "fit_rate"]

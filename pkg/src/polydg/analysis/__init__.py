"""Norms, manufactured cases, convergence studies and diagnostics."""

from .cases import ManufacturedCase, manufactured_case, test1_case, test2_case
from .convergence import (CaseResult, ConvergenceTable, eoc, run_convergence,
                          solve_case)
from .diagnostics import (infsup_estimate, make_energy_monitor,
                          matrix_diagnostics, trace_inverse_report,
                          weak_symmetry_residuals)
from .norms import energy_error, energy_norm, error_vs_exact

__all__ = [
    "ManufacturedCase", "manufactured_case", "test1_case", "test2_case",
    "CaseResult", "ConvergenceTable", "eoc", "run_convergence", "solve_case",
    "infsup_estimate", "make_energy_monitor", "matrix_diagnostics",
    "trace_inverse_report", "weak_symmetry_residuals",
    "energy_error", "energy_norm", "error_vs_exact",
]

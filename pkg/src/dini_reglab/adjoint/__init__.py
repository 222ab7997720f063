"""Adjoint solutions by transposition, harmonic replacement and the dyadic iteration."""

from .harmonic import (M_DEFAULT, HarmonicPiece, ShellChoice, calibrate_M, harmonic_replacement,
                       interior_estimate_constant, shell_norms, shell_select, staircase_ball)
from .iteration import (ContinuityEstimate, HarmonicSequence, Normalization, RescaleState,
                        continuity_estimate, dyadic_iteration, induction_constant, normalization,
                        rescale, select_delta, smallness, transported_omega, two_point_continuity)
from .transpose import (AdjointData, AdjointSolution, assemble_adjoint_rhs, duality_defect,
                        duality_family, rhs_form, solve_adjoint, trace_extension)

__all__ = [
    "AdjointData", "AdjointSolution", "assemble_adjoint_rhs", "rhs_form", "solve_adjoint",
    "duality_defect", "duality_family", "trace_extension",
    "M_DEFAULT", "HarmonicPiece", "ShellChoice", "calibrate_M", "harmonic_replacement",
    "interior_estimate_constant", "shell_norms", "shell_select", "staircase_ball",
    "ContinuityEstimate", "HarmonicSequence", "Normalization", "RescaleState", "continuity_estimate",
    "dyadic_iteration", "induction_constant", "normalization", "rescale", "select_delta", "smallness",
    "transported_omega", "two_point_continuity",
]

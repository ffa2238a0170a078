"""H-infinity estimator synthesis for PIE systems."""

from __future__ import annotations

from .cone import PosPIVar, monomial_basis
from .gain import GainOperator, InversionError, invert_apply
from .sdp import StandardSDP, solve_cvxopt
from .synthesis import (EstimatorResult, LPIProblem, SynthesisError, lpi_operator, synthesize_continuation,
                        synthesize_estimator,
                        transcribe_lpi)

__all__ = [
    "EstimatorResult", "GainOperator", "InversionError", "LPIProblem", "PosPIVar", "StandardSDP",
    "SynthesisError", "invert_apply", "lpi_operator", "monomial_basis", "solve_cvxopt",
    "synthesize_continuation", "synthesize_estimator", "transcribe_lpi",
]

"""Reconstructors: each maps (observations, query times) to a ReconstructionResult."""

from .base import EXTRAPOLATED, FILLED, MEASURED, MODEL, ReconstructionResult
from .kalman import KalmanConfig, reconstruct_kalman
from .linear import reconstruct_linear
from .llm import MATCH_TOLERANCE_S, TOKEN_BUDGET, align_rows, check_budget, reconstruct_llm

__all__ = [
    "EXTRAPOLATED",
    "FILLED",
    "MEASURED",
    "MODEL",
    "MATCH_TOLERANCE_S",
    "TOKEN_BUDGET",
    "KalmanConfig",
    "ReconstructionResult",
    "align_rows",
    "check_budget",
    "reconstruct_kalman",
    "reconstruct_linear",
    "reconstruct_llm",
]

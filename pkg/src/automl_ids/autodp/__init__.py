"""Automated data pre-processing: normalization selection and hybrid class balancing."""
from .balance import (
    BalancePlan,
    adasyn_generate,
    balance,
    compute_balance_plan,
    largest_remainder,
    smote_generate,
)
from .normalize import NormalizationPlan, apply_normalization, fit_normalization
from .shapiro import ShapiroResult, shapiro_wilk

__all__ = [
    "BalancePlan",
    "NormalizationPlan",
    "ShapiroResult",
    "adasyn_generate",
    "apply_normalization",
    "balance",
    "compute_balance_plan",
    "fit_normalization",
    "largest_remainder",
    "shapiro_wilk",
    "smote_generate",
]

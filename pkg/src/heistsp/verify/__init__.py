"""Evaluators and randomized verifiers for the inequalities behind the beta-number bounds."""

from .beta import EmptyBallError, beta_ball, beta_ball_grid_oracle, fit_line
from .curvature import CurvatureConfig, HypothesisError, curvature_lhs, curvature_rhs, verify_prop4
from .lemmas import (BallClass, check_concave_power, check_flat_excess, check_lemma8,
                     check_power_curvature, classify_ball, flat_excess_set)
from .martingale import DecompositionError, build_martingale, verify_martingale

__all__ = [
    "EmptyBallError",
    "beta_ball",
    "beta_ball_grid_oracle",
    "fit_line",
    "CurvatureConfig",
    "HypothesisError",
    "curvature_lhs",
    "curvature_rhs",
    "verify_prop4",
    "BallClass",
    "check_concave_power",
    "check_power_curvature",
    "check_lemma8",
    "classify_ball",
    "flat_excess_set",
    "check_flat_excess",
    "DecompositionError",
    "build_martingale",
    "verify_martingale",
]

"""Objectives, potential-function verifier, optimal oracle and baselines."""

from .baseline import fixed_speed_baseline
from .metrics import Metrics, objective
from .oracle import brute_force_opt, default_horizon, default_speed_grid
from .potential import (
    ConditionReport,
    PotentialEvaluator,
    PotentialState,
    potential,
    rank_of,
    verify_conditions,
)

__all__ = [
    "ConditionReport",
    "Metrics",
    "PotentialEvaluator",
    "PotentialState",
    "brute_force_opt",
    "default_horizon",
    "default_speed_grid",
    "fixed_speed_baseline",
    "objective",
    "potential",
    "rank_of",
    "verify_conditions",
]

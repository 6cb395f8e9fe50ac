"""Privacy budget algebra: (epsilon, delta, varrho) triples and composition rules."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PrivacyBudget:
    """Budget triple; varrho is the advanced-composition slack.

    Budgets are never clamped: out-of-range values are hard errors, since
    silent clamping would corrupt privacy accounting downstream.
    """

    epsilon: float
    delta: float = 0.0
    varrho: float = 0.0

    def __post_init__(self) -> None:
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not (0 <= self.delta < 1):
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")
        if not (0 <= self.varrho < 1):
            raise ValueError(f"varrho must be in [0, 1), got {self.varrho}")

    def require_central(self) -> None:
        """Validate the stricter ranges the composed central-model estimators need."""
        if not (0 < self.epsilon < 1):
            raise ValueError(f"central composed estimator requires epsilon in (0, 1), got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise ValueError(f"central composed estimator requires delta in (0, 1), got {self.delta}")
        if not (0 < self.varrho < 1):
            raise ValueError(f"central composed estimator requires varrho in (0, 1), got {self.varrho}")


def compose_basic(d: int, budget: PrivacyBudget) -> PrivacyBudget:
    """Per-mechanism budget whose d-fold composition is (epsilon, delta)-DP."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return PrivacyBudget(budget.epsilon / d, budget.delta / d, 0.0)


def compose_advanced(d: int, budget: PrivacyBudget) -> PrivacyBudget:
    """Advanced composition: per-mechanism (eps', delta/d, varrho).

    The caller accounts total privacy as (epsilon, delta + varrho).
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not (0 < budget.varrho < 1):
        raise ValueError(f"advanced composition requires varrho in (0, 1), got {budget.varrho}")
    eps_prime = budget.epsilon / math.sqrt(8 * d * math.log(1 / budget.varrho))
    return PrivacyBudget(eps_prime, budget.delta / d, budget.varrho)

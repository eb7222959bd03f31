"""Desk-scale simulation laboratory for kickback-based expectation estimation.

Two register layouts are covered: an ancilla-qubit ensemble whose readout
fraction encodes the expectation through a sine-squared link, and a
binomial-profiled counter register read out directly. Both reuse the same n
system copies across all m measurement rounds; the cost of that reuse is a
per-round kick of the copy state, which everything here plans for, bounds,
simulates and audits.

Layering: linalg (operators and states), distributions (exact kick/noise
laws), protocol (planner and closed-form maps), engines.full (brute-force
joint simulation), engines.kickback (exact-marginal sampler), audits
(inequality checks), harness (reproducible experiments), cli (front end).
"""

from shadowlab import distributions, linalg, protocol
from shadowlab.errors import BudgetExceededError, InfeasiblePlanError
from shadowlab.linalg import DensityMatrix, PovmElement
from shadowlab.protocol import (Alg1Plan, Alg2Plan, DEFAULT_CONSTANTS,
                                ProtocolConstants, plan_alg1, plan_alg2)

__version__ = "0.1.0"

__all__ = [
    "Alg1Plan", "Alg2Plan", "BudgetExceededError", "DEFAULT_CONSTANTS",
    "DensityMatrix", "InfeasiblePlanError", "PovmElement", "ProtocolConstants",
    "distributions", "linalg", "plan_alg1", "plan_alg2", "protocol",
    "__version__",
]

"""Package-wide error types with structured context for CLI exit codes."""

from __future__ import annotations


class BudgetExceededError(RuntimeError):
    """A requested computation would exceed a configured size budget."""

    def __init__(self, message: str, required: int, allowed: int):
        super().__init__(f"{message}: required {required}, allowed {allowed}")
        self.required = required
        self.allowed = allowed


class InfeasiblePlanError(RuntimeError):
    """A run was asked to execute a plan the planner marked infeasible."""

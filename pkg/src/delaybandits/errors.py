"""Exception types shared across the package."""
from __future__ import annotations


class ConfigurationError(ValueError):
    """Invalid user-supplied parameters (bad config field, bad learner setup)."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition, or a runtime invariant failed."""

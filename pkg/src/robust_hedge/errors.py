"""Exception and warning types shared across the package."""


class HedgeError(Exception):
    """Base class for package errors."""


class DomainError(HedgeError, ValueError):
    """Input outside the mathematical domain (non-positive price, negative variance, ...)."""


class ConditionViolation(HedgeError, ValueError):
    """Payoff or configuration violates a structural precondition of the strategy."""


class NumericFailure(HedgeError, ArithmeticError):
    """Quadrature or kernel failed to reach the requested accuracy."""


class ConfigError(HedgeError, ValueError):
    """Invalid experiment configuration; carries every problem found, not just the first."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GridResolutionWarning(UserWarning):
    """Fewer grid steps per rebalance than the configured minimum."""

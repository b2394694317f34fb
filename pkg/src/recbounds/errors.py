"""Exception hierarchy shared by the library and the CLI.

Each class carries the exit code the CLI maps it to.
"""


class RecBoundsError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(RecBoundsError, ValueError):
    """Invalid configuration, input shape, or missing bound input."""

    code = "config_error"


class ConditionError(ConfigError):
    """A regularity condition required by a bound is not met (e.g. gamma = 0)."""

    code = "condition_violated"


class BudgetExhaustedError(ConfigError):
    """The error budget is already spent by the initial gap at T = 0."""

    code = "budget_exhausted"


class NumericalError(RecBoundsError, ArithmeticError):
    exit_code = 3
    code = "numerical_failure"


class ValidationFailure(RecBoundsError):
    exit_code = 2
    code = "validation_violation"

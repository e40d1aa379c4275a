"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RkadError(Exception):
    exit_code = 1


class ValidationError(RkadError, ValueError):
    """Malformed input: bad geometry, bad parameters, bad files."""

    exit_code = 2


class UndefinedStatisticError(RkadError, ValueError):
    """A statistic was requested where it has no definition (e.g. empty pattern)."""

    exit_code = 2


class BudgetError(RkadError):
    """Exact enumeration would exceed the combinatorial budget."""

    exit_code = 2


class InfeasibleSampleError(RkadError):
    """No positive-weight candidates remain for a without-replacement draw."""

    exit_code = 3


class IncompatibleNullError(RkadError):
    """A null distribution does not belong to the study area / sample size in use."""

    exit_code = 4

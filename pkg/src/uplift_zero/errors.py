"""Exception hierarchy shared across the package.

The split matters for the CLI exit codes: validation and I/O problems exit
with 2, infeasibility and violated preconditions exit with 1.
"""


class UpliftZeroError(Exception):
    """Base class for all package errors."""


class ValidationError(UpliftZeroError):
    """Malformed input: bad instance files, schedules outside the feasible
    set, expression trees that do not deserialize, bad tolerance values."""


class InfeasibleError(UpliftZeroError):
    """No feasible dispatch exists for the requested demand."""


class PreconditionError(UpliftZeroError):
    """A documented precondition of an operation does not hold (for example a
    builder applied to a unit outside its setting)."""


class EnumerationLimitError(UpliftZeroError):
    """Commitment enumeration would exceed the supported profile budget."""

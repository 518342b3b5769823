"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit with 1, data problems
with 2 and numerical failures with 3.
"""


class DataError(ValueError):
    """Input data violates a format or a graph invariant."""


class GraphFormatError(DataError):
    """A text input file has a malformed line."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class GraphValidationError(DataError):
    """Parsed data is well-formed but semantically invalid."""


class PlanError(DataError):
    """A perturbation plan does not fit the graph it is applied to."""


class NumericalError(RuntimeError):
    """An iterative routine diverged or failed to converge.

    ``last`` carries whatever partial state the routine had (last iterate,
    loss history or solver trace) so callers can inspect or salvage it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ConvergenceError(NumericalError):
    pass


class UsageError(ValueError):
    """Conflicting or missing command options."""

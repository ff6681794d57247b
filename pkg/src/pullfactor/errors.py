"""Exception types raised across the package.

All of them derive from :class:`PullFactorError` so callers (and the CLI)
can catch the whole family at once.
"""


class PullFactorError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(PullFactorError, ValueError):
    """A numeric argument is non-finite or outside its allowed range."""


class InvalidGeometryError(PullFactorError, ValueError):
    """The cavity geometry cannot support the requested computation."""


class PoleError(PullFactorError, ArithmeticError):
    """The group index vanishes, so the pulling factor diverges."""

    def __init__(self, message, detuning=None, group_index=None):
        super().__init__(message)
        self.detuning = detuning
        self.group_index = group_index


class ThresholdError(PullFactorError, ArithmeticError):
    """Resonance strength sits exactly on the bifurcation threshold."""


class NoSolutionError(PullFactorError):
    """No lasing solution inside the search window."""


class FlatDataError(PullFactorError, ValueError):
    """Measured lasing detunings carry no information (all equal)."""


class ConditioningError(PullFactorError, ValueError):
    """Least-squares design matrix is rank deficient."""


class UndefinedDerivativeError(PullFactorError, ArithmeticError):
    """Local slope requested at a fold/jump point."""


class ConvergenceError(PullFactorError):
    """Iterative fit did not converge; ``report`` holds the best-so-far state."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnstableBootstrapError(PullFactorError):
    """Too many bootstrap replicates failed; ``report`` is the partial result."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

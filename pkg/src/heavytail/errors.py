"""Exception hierarchy shared by every heavytail module."""


class HeavyTailError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class DomainError(HeavyTailError, ValueError):
    """Argument outside the domain of a tail function or distribution."""


class NonConvergence(HeavyTailError):
    """A numerical routine exhausted its budget.

    ``partial`` carries the best result obtained so far, when there is one.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BracketError(HeavyTailError, ValueError):
    """Root-finding interval without a sign change."""


class DivergenceError(HeavyTailError):
    """An expectation that should be finite came out infinite or NaN."""


class InvalidFamily(HeavyTailError, ValueError):
    """The tail family does not satisfy an operation's structural precondition."""


class FamilyError(InvalidFamily):
    """Large-deviation routine called with a tail family it does not cover."""


class ConditionError(HeavyTailError, ValueError):
    """Deviation sequence violates the growth condition of the polynomial limit."""


class DivergentC(HeavyTailError):
    """A c-provider returned an infinite constant."""


class ThresholdError(HeavyTailError, ValueError):
    """``m * t`` is not beyond the certified threshold ``C_epsilon``."""


class NotCertified(HeavyTailError):
    """No grid point qualifies for an empirical certificate."""


class RareEventError(HeavyTailError):
    """Predicted probability is too small to observe with the sample budget."""


class DominationFailure(HeavyTailError):
    """Some Monte Carlo cells exceed the theoretical bound.

    ``report`` holds the full report, including the passing cells.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(HeavyTailError, ValueError):
    """Experiment configuration that cannot be turned into valid objects."""

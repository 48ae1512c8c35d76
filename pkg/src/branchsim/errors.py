"""Exception hierarchy for branchsim.

Every error raised on purpose by the package derives from
:class:`BranchsimError`; most also derive from :class:`ValueError` so callers
that only care about bad input can catch the builtin.
"""


class BranchsimError(Exception):
    """Base class for all package errors."""


class PreconditionError(BranchsimError, ValueError):
    """An operation was called outside its documented domain."""


class NonStochasticMatrix(BranchsimError, ValueError):
    pass


class NotErgodic(BranchsimError, ValueError):
    pass


class NoConvergence(BranchsimError, RuntimeError):
    pass


class DegenerateOffspring(BranchsimError, ValueError):
    """The offspring generating function is linear, f(s) = M s."""


class InvalidGamma(BranchsimError, ValueError):
    pass


class InvalidAlpha(BranchsimError, ValueError):
    pass


class OutOfDomain(BranchsimError, ValueError):
    pass


class GridMismatch(BranchsimError, ValueError):
    pass


class NotInLambda(BranchsimError, ValueError):
    """The point s violates f(s) >= s componentwise."""


class RegimeViolation(BranchsimError, ValueError):
    pass


class PopulationExplosion(BranchsimError, RuntimeError):
    pass


class WindowTooSmall(BranchsimError, ValueError):
    pass


class InvalidCounts(BranchsimError, ValueError):
    pass


class NonPositiveData(BranchsimError, ValueError):
    pass


class EmptySample(BranchsimError, ValueError):
    pass


class KindMismatch(BranchsimError, TypeError):
    pass


class UnknownPreset(BranchsimError, KeyError):
    pass


class HypothesisViolation(BranchsimError, ValueError):
    """A theorem's hypotheses do not hold for the configured model."""


class ConfigError(BranchsimError, ValueError):
    pass

"""Exception types shared across the package.

The CLI maps these onto exit codes, so everything user-facing derives from
:class:`DefscError`.
"""


class DefscError(Exception):
    """Base class for all defsc errors."""


# --- measure ---------------------------------------------------------------

class NonIntegrable(DefscError):
    """Jacobi exponent at or below -1, the density is not integrable."""


class NonPositiveDensity(DefscError):
    """Polynomial factor d(v) is not strictly positive on [-1, 1]."""


class NoDensity(DefscError):
    """Operation requires a density but the measure is atomic."""


class PoleOnSupport(DefscError):
    """Kernel pole lies on (or numerically touches) the support."""


# --- freeconv --------------------------------------------------------------

class NoConvergence(DefscError):
    """Fixed-point solver exhausted its budget.

    Carries the last iterate and its residual for diagnosis.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class NegativeLambda(DefscError):
    """Coupling strength must be nonnegative."""


class MultiIntervalUnsupported(DefscError):
    """Atomic measure with coupling > 1 can split the support; unsupported."""


class DegenerateFit(DefscError):
    """Edge-exponent fit hit a vanishing density value."""


# --- rmt -------------------------------------------------------------------

class DimensionMismatch(DefscError):
    """Potential vector and matrix dimensions disagree."""


class SupportViolation(DefscError):
    """Potential entry outside [-1, 1]."""


class MissingVectors(DefscError):
    """Operation needs eigenvectors but the spectrum was computed without."""


class EigenFailure(DefscError):
    """Dense eigensolver did not converge."""


class SingularResolvent(DefscError):
    """Resolvent requested at a real spectral parameter."""


# --- fluctuation -----------------------------------------------------------

class EdgeDegeneracy(DefscError):
    """|1 - R2| too small, the linearized correction is ill-defined."""


class BranchAmbiguity(DefscError):
    """Quadratic roots indistinguishable and no continuation history."""


# --- harness ---------------------------------------------------------------

class ConfigError(DefscError):
    """Experiment specification is malformed or inconsistent."""


class UnknownKind(DefscError):
    """No predicted envelope for the requested experiment kind."""


class InsufficientPoints(DefscError):
    """Scaling fit needs at least three distinct abscissae."""

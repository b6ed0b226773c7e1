"""Exception hierarchy shared by all modules."""


class ProbEnvError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ProbEnvError):
    """State outside the aerodynamic validity domain of a model."""


class UndefinedAnglesError(ProbEnvError):
    """Aerodynamic angles requested for a zero-speed state."""


class IntegrationError(ProbEnvError):
    """Non-finite values produced by an integration step."""


class TrimError(ProbEnvError):
    """A trim problem did not converge.

    Attributes
    ----------
    residual : float
        Best constraint residual reached before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class TrimSetBuildError(ProbEnvError):
    """Too many grid nodes failed while building a trim set."""


class EstimationQualityError(ProbEnvError):
    """Monte Carlo discard rate exceeded the allowed fraction."""


class HorizonError(ProbEnvError):
    """Time horizon above the guard without explicit override."""


class DegenerateDimensionError(ProbEnvError):
    """A sample dimension has zero variance."""

    def __init__(self, dim):
        super().__init__(f"zero sample variance in dimension {dim!r}")
        self.dim = dim


class EmptyEnvelopeError(ProbEnvError):
    """The forward/backward density product vanishes everywhere."""


class GridError(ProbEnvError):
    """Invalid grid specification."""


class DatabaseFormatError(ProbEnvError):
    """Base class for envelope database load failures."""


class BadMagicError(DatabaseFormatError):
    pass


class VersionMismatchError(DatabaseFormatError):
    pass


class TruncatedFileError(DatabaseFormatError):
    pass


class ChecksumError(DatabaseFormatError):
    pass


class ControllerSingularityError(ProbEnvError):
    """Outer-loop inversion matrix is singular."""


class AllocationError(ProbEnvError):
    """Control effectiveness matrix is rank deficient."""


class ThrottleHoldError(ProbEnvError):
    """Thrust effectiveness too small to invert; thrust is held."""


class OracleBudgetError(ProbEnvError):
    """Brute-force enumeration would exceed the configured budget."""

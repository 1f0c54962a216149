"""Exception hierarchy shared across the package."""


class ElastoHybridError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(ElastoHybridError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class UnsupportedError(ElastoHybridError, ValueError):
    """The requested configuration (space, degree, method) is not supported."""


class GeometryError(ElastoHybridError):
    """Degenerate, inverted or otherwise unusable element geometry."""


class AssemblyError(ElastoHybridError):
    """A local matrix could not be assembled or condensed."""


class SingularSystemError(ElastoHybridError):
    """The global system could not be factorized or solved accurately."""


class RecoveryError(ElastoHybridError):
    """A local stress recovery system is singular."""

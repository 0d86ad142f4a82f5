"""Exception types raised across the simulator."""


class AOSError(Exception):
    """Base class for all simulator errors."""


class DomainError(AOSError, ValueError):
    """An argument lies outside the mathematical domain of a formula."""


class ParameterError(AOSError, ValueError):
    """Invalid generation, imaging or planning parameters."""


class StatsError(AOSError, ValueError):
    """Forest statistics cannot be computed for the given forest."""


class PoseError(AOSError, ValueError):
    """Camera pose is inside or below the scene geometry."""


class CoverageError(AOSError, ValueError):
    """A ground location is not covered by the required samples."""


class QueryError(AOSError, LookupError):
    """A query over sweep records matched nothing usable."""


class ConfigError(AOSError, ValueError):
    """Invalid run configuration; ``key`` holds the offending key path."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key

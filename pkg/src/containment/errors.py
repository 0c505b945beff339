"""Exception types shared across the package."""


class ContainmentError(Exception):
    """Base class for all package errors."""


class NetworkError(ContainmentError, ValueError):
    """Malformed network or degenerate leader/follower partition."""


class SingularBlock(ContainmentError):
    """The follower block of the Laplacian is not invertible (no leader-rooted forest)."""


class NotHurwitz(ContainmentError):
    """A matrix expected to be Hurwitz-stable (after negation) is not."""


class GammaOutOfRange(ContainmentError, ValueError):
    pass


class NegativeTime(ContainmentError, ValueError):
    pass


class NonFiniteState(ContainmentError, FloatingPointError):
    """An integration step produced a NaN or infinite coordinate."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite state at t={t:g}")


class ConfigError(ContainmentError, ValueError):
    """Invalid network or experiment configuration file."""

    def __init__(self, message, path=None, line=None, field=None):
        self.message = message
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TooManyAborts(ContainmentError):
    """More than the tolerated fraction of ensemble replicates aborted."""

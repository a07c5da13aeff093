"""Exception types raised across the package."""


class BitResetError(Exception):
    """Base class for all package errors."""


class DistributionError(BitResetError, ValueError):
    """A probability vector is malformed beyond the renormalization tolerance."""


class DetailedBalanceError(BitResetError, ValueError):
    """A rate matrix is not a valid detailed-balance generator."""


class ReducibleChainError(BitResetError, ValueError):
    """A rate matrix splits the state space into disconnected blocks."""

    def __init__(self, message, blocks=()):
        super().__init__(message)
        self.blocks = [list(b) for b in blocks]


class DegenerateInputError(BitResetError, ValueError):
    """A quantity is undefined for the supplied input (e.g. both rates zero)."""


class HypothesisError(BitResetError, ValueError):
    """The hypotheses of a theorem are not met by the supplied run."""


class UnsupportedProtocolError(BitResetError, ValueError):
    """An operation was asked about a protocol family it does not handle."""


class InfeasibleError(BitResetError, ValueError):
    """A requested reset error cannot be reached with the given resources."""

    def __init__(self, message, min_eps=None):
        super().__init__(message)
        self.min_eps = min_eps


class StabilityError(BitResetError, ValueError):
    """A time step exceeds the explicit scheme's stability limit."""

    def __init__(self, message, dt_max=None):
        super().__init__(message)
        self.dt_max = dt_max


class ConfigError(BitResetError, ValueError):
    """A run configuration violates its schema or a physical precondition."""

"""Exception types raised across the package.

All derive from ``ValueError`` so callers that only care about bad input can
catch that.
"""


class TokenDynError(ValueError):
    pass


class DimensionError(TokenDynError):
    """Array shapes do not agree."""


class UnsupportedDimensionError(DimensionError):
    """The operation is only defined for a particular channel count."""


class DomainError(TokenDynError):
    """Non-finite or otherwise out-of-domain values."""


class ContractError(TokenDynError):
    """An input violates a documented precondition (e.g. symmetry)."""


class PreconditionError(TokenDynError):
    """A modelling precondition fails, e.g. a zero initial token."""

    def __init__(self, message, token_index=None):
        super().__init__(message)
        self.token_index = token_index


class NotApplicableError(TokenDynError):
    """The requested quantity is not defined for these parameters."""


class DegeneratePointError(TokenDynError):
    """A derivative was requested at a point where it does not exist."""

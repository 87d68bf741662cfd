"""Exception types shared across the package."""


class HslabError(Exception):
    """Base class for all package errors."""


class DomainError(HslabError, ValueError):
    """A parameter violates one of its validity constraints."""

    def __init__(self, field, constraint, message=None):
        self.field = field
        self.constraint = constraint
        super().__init__(message or f"{field}: {constraint}")


class DivergentIntegral(HslabError):
    """An improper integral fails power counting at ``endpoint``.

    Raised deliberately: callers use it to confirm divergence claims.
    """

    def __init__(self, endpoint, message=None):
        self.endpoint = endpoint
        super().__init__(message or f"integral diverges at {endpoint}")


class NonConvergence(HslabError):
    """An adaptive routine exhausted its evaluation budget."""


class FitError(HslabError):
    """A tail fit failed its window or residual requirements."""


class BoundViolation(HslabError):
    """A decay bound law failed on a computed solution."""

    def __init__(self, law, message=None):
        self.law = law
        super().__init__(message or f"bound violated: {law}")

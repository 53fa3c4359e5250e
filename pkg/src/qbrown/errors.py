"""Exception types shared by the qbrown modules."""


class DomainError(ValueError):
    """An input lies outside the domain of a formula.

    ``field`` names the offending parameter so that config validation can
    report it back to the user.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ContractViolation(RuntimeError):
    """A numerical invariant monitored during a computation was broken."""

    def __init__(self, message, invariant=None, step=None):
        super().__init__(message)
        self.invariant = invariant
        self.step = step


class ResourceError(RuntimeError):
    """The requested problem is too large for dense linear algebra."""

"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """An input violates a documented precondition."""


class DomainError(ValueError):
    """An input lies outside the domain of a map (e.g. non-stable AR coefficients)."""


class NumericalFailure(RuntimeError):
    """A numerical routine failed (non-finite state, indefinite covariance, ...)."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"{message} (t={t})"
        super().__init__(message)


class DegenerateWeights(NumericalFailure):
    """All particle weights vanished at some time step."""


class StaleArchive(RuntimeError):
    """A draws archive does not match its manifest."""

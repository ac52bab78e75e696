"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid user input: bad shapes, non-finite values, out-of-range parameters."""


class DomainError(InputError):
    """Inputs are individually valid but outside the regime where a formula applies
    (e.g. sample sizes too small for a log-decay bound)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed in a way that indicates degenerate input
    (singular systems, indefinite Gram matrices)."""

"""Error taxonomy shared across the package.

Three failure classes are distinguished so callers can react sensibly:
configuration errors are caller bugs and unrecoverable, not-ready errors
mean "keep sampling", and precondition errors flag a formula applied
outside its domain of validity.
"""


class ConfigurationError(ValueError):
    """Invalid configuration: bad weights, dimensions, budgets, or arguments."""


class NotReadyError(RuntimeError):
    """A statistic was requested before enough data exists to define it."""


class PreconditionError(ValueError):
    """A closed-form expression was evaluated outside its validity region."""


class SourceExhausted(RuntimeError):
    """An offline data source ran out of logged records."""

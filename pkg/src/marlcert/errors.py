"""Exception types shared across the package."""


class MarlcertError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MarlcertError):
    """Malformed input: bad shapes, bad tables, bad scopes, bad files."""


class InstanceFormatError(ValidationError):
    """An instance or report file does not follow the documented schema."""


class CapExceededError(MarlcertError):
    """The joint state-action space is larger than the evaluation cap."""


class ReducibilityError(MarlcertError):
    """The induced chain fails the unique-recurrent-class or aperiodicity check."""


class NumericalError(MarlcertError):
    """A solver finished but its result failed a residual or sanity check."""

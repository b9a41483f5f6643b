"""Exception types shared across the package."""


class FractalBVError(Exception):
    """Base class for all package errors."""


class AxiomViolation(FractalBVError, ValueError):
    """A nested-fractal axiom failed during system validation.

    The message names the violated axiom (connectivity, nesting,
    one-point intersection, ...).
    """


class ConfigError(FractalBVError, ValueError):
    """A custom-system config file was rejected; message carries location info."""


class CapExceeded(FractalBVError, RuntimeError):
    """An enumeration would exceed the configured size cap."""


class PreconditionError(FractalBVError, ValueError):
    """An operation was called outside its stated preconditions."""


class InvariantViolation(FractalBVError, RuntimeError):
    """A mathematically exact identity failed beyond the certified error bounds.

    Raised when interval results that must overlap do not, or when a
    recovered integer quantity is excluded by its enclosure.  Signals an
    engine bug or a silently violated precondition, never a tolerance issue.
    """

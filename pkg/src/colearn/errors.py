"""Exception types shared across the package."""


class ColearnError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(ColearnError):
    """A file or record does not match the expected schema."""


class ValidationError(ColearnError):
    """A value violates a domain invariant."""


class MissingTypeError(ColearnError):
    """A description yields no recognizable vehicle type."""


class UnknownTypeError(ColearnError):
    """A vehicle type is not covered by any synonym cluster."""


class DegenerateInputError(ColearnError):
    """Scores are unsuitable for mixture fitting (too few or all equal)."""


class NoHeadsError(ColearnError):
    """An anchor has no regression heads to select from."""


class IncompatibleVectorsError(ColearnError):
    """Two parameter vectors differ in their names or name order."""


class ConfigError(ColearnError):
    """A simulation configuration value is invalid."""

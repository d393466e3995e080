"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: InputError subclasses that
come from configuration parsing exit with 2, data-file problems with 3,
and numerical failures (non-finite values) with 4.
"""


class InputError(ValueError):
    """An operation was handed arguments that violate its contract."""


class ShapeError(InputError):
    """Operand shapes do not conform."""


class ConfigError(InputError):
    """A configuration value or file is invalid."""


class NonFiniteError(ArithmeticError):
    """A computation produced (or was given) NaN or infinity."""


class DataFileError(InputError):
    """An on-disk artifact cannot be parsed."""


class BadMagicError(DataFileError):
    """Feature file does not start with the expected magic bytes."""


class BadVersionError(DataFileError):
    """Feature file declares an unsupported format version."""


class TruncatedFileError(DataFileError):
    """Feature file is shorter than its header promises."""


class BadChecksumError(DataFileError):
    """Feature file payload does not match its stored CRC32."""


class SchemaError(DataFileError):
    """A JSON record violates its schema; the message names the offending path."""

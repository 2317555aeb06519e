"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes: ConfigError/InputError -> 1, DataError -> 2.
"""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class InputError(ValueError):
    """An input tensor/record is malformed (wrong shape, range, or schema)."""


class DataError(RuntimeError):
    """Dataset-level inconsistency: missing files, split/manifest mismatches."""

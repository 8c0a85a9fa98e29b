"""Exception classes shared across the package.

Each class maps to one failure category the CLI translates into a
documented exit code (see slicernn.cli).
"""


class SlicernnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SlicernnError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ArgumentError(SlicernnError, ValueError):
    """An argument value violates a documented precondition."""


class LengthError(SlicernnError, ValueError):
    """A review does not fit the configured padded length."""


class FormatError(SlicernnError, ValueError):
    """An input file does not match its documented format."""


class StratificationError(SlicernnError, ValueError):
    """A class is too small to be split into train/val/test."""


class ConfigError(SlicernnError, ValueError):
    """Configuration is invalid or inconsistent with the dataset."""


class NumericError(SlicernnError, ArithmeticError):
    """A computation produced a non-finite value."""


class StateError(SlicernnError, RuntimeError):
    """An operation was called with missing or inconsistent cached state."""


class CheckpointCorruptError(SlicernnError, ValueError):
    """Checkpoint file failed its checksum or is truncated."""


class CheckpointVersionError(SlicernnError, ValueError):
    """Checkpoint file carries an unknown version header."""

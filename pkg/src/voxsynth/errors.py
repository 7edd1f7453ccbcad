"""Semantic exception hierarchy shared by all voxsynth modules.

Every error raised by the library derives from :class:`VoxsynthError`, so
callers (including the CLI) can map failures to exit codes without string
matching.
"""


class VoxsynthError(Exception):
    """Base class for all voxsynth errors."""


class ConfigError(VoxsynthError):
    """Invalid run configuration, config file, or CLI arguments."""


class DataError(VoxsynthError):
    """Base class for errors caused by the input data."""


class SchemaMismatch(DataError):
    """Column names/kinds do not match the expected schema."""


class ParseError(DataError):
    """A cell could not be parsed into its declared column kind."""

    def __init__(self, row: int, column: str, message: str = ""):
        self.row = row
        self.column = column
        detail = f" ({message})" if message else ""
        super().__init__(f"row {row}, column {column!r}: cannot parse{detail}")


class EmptyInput(DataError):
    """The input file or table contains no data rows."""


class InsufficientData(DataError):
    """Too few rows remain after filtering to perform the operation."""


class DegenerateSplit(DataError):
    """A requested split would leave one partition empty."""


class InsufficientClassRows(DataError):
    """An undersampling target exceeds the rows available for a class."""


class DegenerateLabels(DataError):
    """A classifier that requires both classes was given single-class labels."""


class FoldInfeasible(DataError):
    """The smallest class cannot populate every cross-validation fold."""


class ShapeError(VoxsynthError):
    """Array dimensions do not chain or do not match."""


class NumericalDivergence(VoxsynthError):
    """Training produced non-finite values; carries step context when known."""

    def __init__(self, message: str, epoch: int | None = None, step: int | None = None):
        self.epoch = epoch
        self.step = step
        where = ""
        if epoch is not None:
            where = f" at epoch {epoch}" + (f", step {step}" if step is not None else "")
        super().__init__(message + where)


class ConditionUnsatisfiable(VoxsynthError):
    """Conditional rejection sampling exhausted its retry budget."""


class ModelFormatError(VoxsynthError):
    """A serialized model file is corrupt or has an unsupported version."""


class FormatError(VoxsynthError):
    """Unsupported (artifact, output format) pairing in report emission."""

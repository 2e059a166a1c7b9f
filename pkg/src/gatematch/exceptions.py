"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
library failures onto process exit statuses without a lookup table.
"""


class GateError(Exception):
    """Base class for all errors raised by gatematch."""

    exit_code = 3


class DataError(GateError, ValueError):
    """Malformed or non-finite input data.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    column name, when the failure can be located.
    """

    exit_code = 1

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)


class SchemaError(DataError):
    """A column named by the schema is absent from the file."""


class TreatmentError(DataError):
    """Treatment indicator takes a value other than 0 or 1."""


class EmptyArmError(DataError):
    """One treatment arm contains no units."""


class DimensionError(GateError, ValueError):
    """Array lengths or widths disagree."""

    exit_code = 1


class InsufficientMatchesError(GateError):
    """Requested number of matches exceeds the opposite-arm size."""

    exit_code = 1


class SubsampleError(GateError):
    """Subsample sizes too small for the estimator to run."""

    exit_code = 1


class EmptyCellError(GateError):
    """No unit has the requested discrete subgroup value."""


class BandwidthError(GateError):
    """Bandwidth cannot be selected (zero spread) or is not positive."""


class RankError(GateError, ArithmeticError):
    """Design matrix is rank deficient on the sample."""


class FoldError(GateError):
    """A cross-fitting (fold, arm) cell is empty."""

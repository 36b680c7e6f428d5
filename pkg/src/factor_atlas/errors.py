"""Exception hierarchy.

Two broad families matter for the CLI exit codes: ``DataError`` (malformed
or degenerate inputs, exit code 3) and ``NumericalError`` (solver and
conditioning failures, exit code 4).
"""


class FactorAtlasError(Exception):
    """Base class for all package errors."""


class DataError(FactorAtlasError):
    """Invalid, malformed, or degenerate data."""


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DuplicateEdgeError(DataError):
    """The same (cited, citing) pair appeared more than once."""


class EmptyCorpusError(DataError):
    """An input stream produced no citation cells."""


class EmptySelectionError(DataError):
    """A filter or selection left nothing behind."""


class NotFoundError(DataError):
    """A journal id was not present where required."""


class DomainError(DataError):
    """An argument violated a documented precondition."""


class DegenerateVariableError(DataError):
    """One or more citing columns have zero variance."""

    def __init__(self, variable_ids):
        ids = list(variable_ids)
        preview = ", ".join(str(v) for v in ids[:10])
        more = "" if len(ids) <= 10 else f" (+{len(ids) - 10} more)"
        super().__init__(f"zero-variance variables: {preview}{more}")
        self.variable_ids = ids


class DegenerateSubsetError(DataError):
    """A case subset left no usable citing columns."""


class DegenerateEnvironmentError(DataError):
    """A local citation environment contains only the seed journal."""


class EmptyGraphError(DataError):
    """Thresholding removed every node of a similarity graph."""


class NumericalError(FactorAtlasError):
    """A numerical routine failed or produced an unusable result."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""


class IllConditionedError(NumericalError):
    """A matrix is too ill-conditioned for the requested operation."""

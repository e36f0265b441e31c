"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 3, DomainError and
NumericError -> 4.  Usage errors are argparse's usual exit code 2.
"""


class DcaError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(DcaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(DcaError, ValueError):
    """Malformed or inconsistent input data (files, corpora, group specs)."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfVocabularyError(DataError):
    """A document references word ids outside the model's vocabulary."""

    def __init__(self, word_ids):
        self.word_ids = sorted(int(j) for j in word_ids)
        super().__init__(f"word ids not covered by the model: {self.word_ids}")


class NumericError(DcaError, RuntimeError):
    """A numeric procedure failed (degenerate input, corrupted state)."""


class DegenerateDocumentError(NumericError):
    """Every component assigns zero probability to an observed word."""

    def __init__(self, word_id):
        self.word_id = int(word_id)
        super().__init__(
            f"word id {self.word_id} has zero probability under every component"
        )


class InvariantError(NumericError):
    """An internal consistency check failed (indicates a bug)."""

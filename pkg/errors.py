"""
Exception types shared across the toolkit.

Library code raises these; the CLI maps them to exit codes.
"""


class ContractViolation(ValueError):
    """A documented precondition of an operation does not hold."""


class UsageError(ValueError):
    """Bad command-line or configuration input."""


class DataLoadError(RuntimeError):
    """A dataset, split or artifact file could not be read."""


class ParseError(DataLoadError):
    """A malformed token or record inside a data file."""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class SplitError(DataLoadError):
    """A SplitSpec cannot be applied to the dataset."""


class CheckpointError(DataLoadError):
    """A checkpoint file is truncated, corrupt or from another format version."""


class NumericalFailure(RuntimeError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message: str, state: dict = None, dump_path: str = None):
        self.state = state or {}
        self.dump_path = dump_path
        if dump_path:
            message = f"{message} (state dumped to {dump_path})"
        super().__init__(message)


EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, (UsageError, ContractViolation)):
        return EXIT_USAGE
    if isinstance(error, DataLoadError):
        return EXIT_DATA
    if isinstance(error, NumericalFailure):
        return EXIT_NUMERICAL
    return EXIT_OTHER

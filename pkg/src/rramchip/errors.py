"""Exception hierarchy shared by the chip model and the host driver.

Each error class carries the CLI exit code it maps to.
"""


class ChipError(Exception):
    exit_code = 1


class InputError(ChipError, ValueError):
    """Non-finite or out-of-range physical input."""

    exit_code = 2


class PulseWidthError(InputError):
    pass


class SelectionError(ChipError):
    """Addressed cell is not reachable under the current row/column selection."""

    exit_code = 2


class SetConflictError(SelectionError):
    pass


class RangeError(ChipError):
    """Requested operating point is outside what the DAC can deliver."""

    exit_code = 2


class AccessError(ChipError):
    """Bad register address or write to a read-only register."""

    exit_code = 2


class BusyError(ChipError):
    exit_code = 2


class EncodingError(ChipError, ValueError):
    exit_code = 2


class FramingError(ChipError):
    exit_code = 4


class IntegrityError(ChipError):
    exit_code = 4


class TranscriptParseError(ChipError):
    exit_code = 3

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno

"""Category-coded exception hierarchy.

Every error raised by the simulator derives from ``BnnSimError`` and carries
the CLI exit code of its category. The classes also subclass ``ValueError``
so library callers can keep catching plain ``ValueError``.

Hierarchy
=========
::
    BnnSimError (ValueError)
    ├─ UsageError            exit 1
    │  └─ ConfigurationError exit 1
    ├─ DataFormatError       exit 2
    │  └─ InputError         exit 2
    ├─ ConstraintError       exit 3
    │  └─ DeviceError        exit 3
    └─ NumericError          exit 4
       └─ TrainingError      exit 4
"""

from common.enums import ExitCode

__all__ = [
    "BnnSimError",
    "ConfigurationError",
    "ConstraintError",
    "DataFormatError",
    "DeviceError",
    "InputError",
    "NumericError",
    "TrainingError",
    "UsageError",
]


class BnnSimError(ValueError):
    exit_code: ExitCode = ExitCode.USAGE

    @property
    def category(self) -> str:
        return self.exit_code.name.lower()


class UsageError(BnnSimError):
    exit_code = ExitCode.USAGE


class ConfigurationError(UsageError):
    """Unknown enum value, invalid config file or inconsistent settings."""


class DataFormatError(BnnSimError):
    """A dataset or artifact file is missing, truncated or malformed."""

    exit_code = ExitCode.DATA

    def __init__(self, message: str, *, path: str | None = None, offset: int | None = None, line: int | None = None):
        details = []
        if path is not None:
            details.append(f"file={path}")
        if offset is not None:
            details.append(f"offset={offset}")
        if line is not None:
            details.append(f"line={line}")
        super().__init__(f"{message} ({', '.join(details)})" if details else message)
        self.path = path
        self.offset = offset
        self.line = line


class InputError(DataFormatError):
    """A vector or matrix argument has the wrong shape or non-finite values."""


class ConstraintError(BnnSimError):
    """An analog voltage constraint would be violated."""

    exit_code = ExitCode.CONSTRAINT


class DeviceError(ConstraintError):
    """Memristor parameters are physically inconsistent."""


class NumericError(BnnSimError):
    exit_code = ExitCode.NUMERIC


class TrainingError(NumericError):
    """Gradient descent diverged."""

    def __init__(self, message: str, *, epoch: int):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch

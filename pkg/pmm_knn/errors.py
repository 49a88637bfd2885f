from __future__ import annotations

from pathlib import Path
from typing import Optional


class PmmKnnError(Exception):
    """Base class for every error raised by the library."""


class ConfigError(PmmKnnError):
    pass


class DimensionalityError(PmmKnnError, ValueError):
    pass


class ParameterError(PmmKnnError, ValueError):
    pass


class DomainError(PmmKnnError, ValueError):
    """Operator evaluated outside its mathematical domain (e.g. 0 ** negative)."""


class SizeError(PmmKnnError, ValueError):
    """Input too large for an exponential-time evaluator."""


class ModelError(PmmKnnError):
    pass


class LabelError(PmmKnnError):
    def __init__(self, message: str, *, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class DataParseError(PmmKnnError):
    def __init__(self, message: str, *, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class InputError(PmmKnnError):
    def __init__(self, message: str, *, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class DataFileMissingError(PmmKnnError):
    def __init__(self, path: Path, url: str = ""):
        hint = f" Download it from {url} (or run `python -m pmm_knn fetch`)." if url else ""
        super().__init__(f"Data file not found: {path}.{hint}")
        self.path = Path(path)
        self.url = url


class FetchError(PmmKnnError):
    pass


class FoldError(PmmKnnError):
    """A cross-validation fold failed; `fold` is its zero-based index."""

    def __init__(self, fold: int, cause: BaseException):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause

"""Self-improving sorter exceptions."""
from __future__ import annotations


class SelfSortError(Exception):
    """Base exception for the self-improving sorter."""


class WorldGenerationError(SelfSortError):
    """World generation exhausted its attempt budget."""


class FunctionDomainError(SelfSortError):
    """Function evaluated outside its domain."""


class SearchBudgetExceeded(SelfSortError):
    """Exact monotone partition search ran out of budget."""

    def __init__(self, message: str, best_upper_bound: int) -> None:
        super().__init__(message)
        self.best_upper_bound = best_upper_bound


class PoVectorError(SelfSortError):
    """Malformed PoVector."""


class LearningError(SelfSortError):
    """Learning phase could not complete."""


class InsufficientInstancesError(LearningError):
    """Recorded instance stream is too short."""

    def __init__(self, message: str, required: int, available: int) -> None:
        super().__init__(message)
        self.required = required
        self.available = available

    @property
    def shortfall(self) -> int:
        """Number of missing instances."""
        return self.required - self.available


class ModelMismatchError(SelfSortError):
    """Model does not fit the instance or world."""


class EnumerationBudgetExceeded(SelfSortError):
    """Exhaustive enumeration exceeds its budget."""


class CodecError(SelfSortError):
    """Malformed or corrupted document."""


class OracleMismatchError(SelfSortError):
    """Sorted output differs from the reference sort."""

    def __init__(self, message: str, values: tuple[float, ...]) -> None:
        super().__init__(message)
        self.values = values


class ConfigError(SelfSortError):
    """Invalid run configuration."""


class InvalidWorldError(SelfSortError):
    """World is structurally malformed."""


class NotEnumerableError(SelfSortError):
    """Hidden source has no finite support to enumerate."""

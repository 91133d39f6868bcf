"""Exception hierarchy shared by every esgcheck module."""

from __future__ import annotations


class EsgError(Exception):
    """Base class for all esgcheck errors."""


class InvalidInputError(EsgError, ValueError):
    pass


class ParameterError(InvalidInputError):
    pass


class ConsistencyError(EsgError):
    """Two inputs that must agree (verdicts vs checklist, labels vs items) do not."""


class FormatError(EsgError):
    """Unsupported file type or malformed data file."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(FormatError):
    pass


class ExtractionError(EsgError):
    def __init__(self, message: str, diagnostics: list[str] | None = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "; " + "; ".join(self.diagnostics)


class BackendError(EsgError):
    """A remote model or embedding service failed."""

    def __init__(self, message: str, *, retries: int = 0, status: int | None = None):
        super().__init__(message)
        self.retries = retries
        self.status = status


class TransportError(BackendError):
    pass


class MockScriptError(EsgError):
    """The scripted mock backend had no reply for a request."""


class PricingError(EsgError):
    pass


class EngineOutputError(EsgError):
    pass


class RoutingError(EsgError):
    pass


class RunError(EsgError):
    pass


class ConflictError(EsgError):
    pass


class NotFoundError(EsgError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""

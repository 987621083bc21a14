"""Exception hierarchy shared across the package."""

from __future__ import annotations


class KgAlignError(Exception):
    """Base class for all package errors."""


class ParseError(KgAlignError):
    """A line of an input file does not match the expected layout."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateIdError(KgAlignError):
    """The same id was defined more than once within one file."""


class DanglingReferenceError(KgAlignError):
    """A triple references an entity id that is not defined."""


class IntegrityError(KgAlignError):
    """Graph inputs are not referentially consistent."""


class ShapeError(KgAlignError):
    """An embedding file does not match its declared shape."""


class UnknownEntityError(KgAlignError):
    """An entity id has no vector or is otherwise unknown."""


class EmptyEvalError(KgAlignError):
    """An evaluation was requested over an empty set."""


class AttributeUnknownError(KgAlignError):
    """Function degree requested for an attribute absent from both graphs."""


class RelationUnknownError(KgAlignError):
    """Function degree requested for a relation absent from both graphs."""


class EmptyCandidatesError(KgAlignError):
    """An operation that needs candidates received none."""


class TooManyOptionsError(KgAlignError):
    """More options requested than single-letter labels exist."""


class TransportError(KgAlignError):
    """All retries against the completion endpoint were exhausted."""


class ApiError(KgAlignError):
    """The completion endpoint returned a non-success status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"endpoint returned status {status}: {body[:200]}")
        self.status = status
        self.body = body


class RunAbortedError(KgAlignError):
    """Too many voting rounds failed by transport for one source entity."""

    def __init__(self, source: int, message: str):
        super().__init__(f"source {source}: {message}")
        self.source = source

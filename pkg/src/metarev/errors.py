"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MetarevError(Exception):
    """Base class for every error raised by this package."""


class UnknownFacet(MetarevError, ValueError):
    def __init__(self, label: str) -> None:
        super().__init__(f"unknown criteria facet: {label!r}")
        self.label = label


class UnknownLevel(MetarevError, ValueError):
    def __init__(self, label: str, kind: str = "level") -> None:
        super().__init__(f"unknown {kind}: {label!r}")
        self.label = label
        self.kind = kind


class ValidationError(MetarevError, ValueError):
    """One or more invariant violations, each as a ``(path, reason)`` pair."""

    def __init__(self, issues: list[tuple[str, str]]) -> None:
        self.issues = list(issues)
        super().__init__("; ".join(f"{path}: {reason}" if path else reason for path, reason in self.issues))


class DecodeError(MetarevError, ValueError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DanglingDocRef(MetarevError, LookupError):
    def __init__(self, doc_id: str) -> None:
        super().__init__(f"annotation references unknown document {doc_id!r}")
        self.doc_id = doc_id


class SpanOutOfRange(MetarevError, ValueError):
    pass


class StoreIOError(MetarevError, OSError):
    pass


class InsufficientData(MetarevError, ValueError):
    pass


class EmptyInput(InsufficientData):
    pass


class DegenerateAgreement(MetarevError, ValueError):
    pass


class LengthMismatch(MetarevError, ValueError):
    pass


class NoJudgements(MetarevError, ValueError):
    pass


class InsufficientRatings(MetarevError, ValueError):
    pass


class EmptyRatings(InsufficientRatings):
    pass


class EmptyCorpus(MetarevError, ValueError):
    pass


class UnboundPlaceholder(MetarevError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound placeholder {{{{{self.name}}}}}"


class BackendError(MetarevError):
    """Any failure to obtain a completion."""


class BackendUnavailable(BackendError):
    pass


class ReplayMiss(BackendError, LookupError):
    def __init__(self, key: str) -> None:
        super().__init__(f"no recorded completion for request {key}")
        self.key = key


class UnparseableReply(MetarevError, ValueError):
    pass

"""Exception types shared across the toolkit.

Every error raised on bad input derives from :class:`ToolkitError`, so
callers (and the CLI) can distinguish data problems from programming bugs.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ToolkitError):
    """A file or token does not match its expected format.

    Carries the 1-based line number and source name when the error was
    found while parsing a file, so diagnostics point at the offending line.
    """

    def __init__(self, message: str, *, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(message)

    def __str__(self) -> str:
        prefix = ""
        if self.source is not None:
            prefix += f"{self.source}:"
        if self.line is not None:
            prefix += f"{self.line}:"
        if prefix:
            return f"{prefix} {self.message}"
        return self.message


class DegenerateInputError(ToolkitError):
    """Numerically degenerate input (zero vector, zero spread) that would
    silently corrupt downstream scores if ignored."""


class UndefinedRateError(ToolkitError):
    """An error rate is undefined because one of the trial classes is empty."""


class UnknownSpeakerError(ToolkitError):
    """A claimed or referenced speaker id is not in the registry."""


class EnrollmentError(ToolkitError):
    """Enrollment input does not line up with the speaker registry."""


class CoverageError(ToolkitError):
    """A submission does not cover the ground-truth key exactly.

    ``missing`` lists key utterances absent from the submission, ``extra``
    lists submission utterances absent from the key.
    """

    def __init__(self, missing: tuple[str, ...] = (), extra: tuple[str, ...] = ()):
        self.missing = missing
        self.extra = extra
        super().__init__(self._describe())

    def _describe(self) -> str:
        parts = []
        for label, ids in (("missing", self.missing), ("extra", self.extra)):
            if ids:
                shown = ", ".join(ids[:10])
                more = f" (and {len(ids) - 10} more)" if len(ids) > 10 else ""
                parts.append(f"{len(ids)} {label} utterance(s): {shown}{more}")
        return "; ".join(parts) or "submission does not match key"

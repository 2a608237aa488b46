"""Exception hierarchy shared by all endokit modules.

Every error raised by the library (as opposed to programming errors such as
``TypeError``) derives from :class:`EndokitError`, so callers such as the
CLI can map data problems to a single exit code.
"""

from __future__ import annotations


class EndokitError(Exception):
    """Base class for all endokit data and usage errors."""


class UnknownLabel(EndokitError):
    """A label token does not name any of the 17 known classes."""

    def __init__(self, name: str):
        super().__init__(f"unknown label: {name!r}")
        self.name = name


class MalformedRow(EndokitError):
    """A manifest or prediction row could not be parsed."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateFrameId(EndokitError):
    def __init__(self, frame_id: str, line_no: int):
        super().__init__(f"line {line_no}: duplicate frame_id {frame_id!r}")
        self.frame_id = frame_id
        self.line_no = line_no


class EmptyLabelSet(EndokitError):
    def __init__(self, line_no: int):
        super().__init__(f"line {line_no}: empty label set")
        self.line_no = line_no


class ConsistencyError(EndokitError):
    """An artifact violates one of its internal invariants."""


class SchemaMismatch(EndokitError):
    """A file does not follow its declared schema (header, keys, columns)."""


class InvalidScore(EndokitError):
    """A prediction score is NaN, infinite, or outside [0, 1]."""


class MissingPrediction(EndokitError):
    def __init__(self, frame_id: str):
        super().__init__(f"no prediction row for frame {frame_id!r}")
        self.frame_id = frame_id


class UnknownFrame(EndokitError):
    def __init__(self, frame_id: str, reason: str = "not present in ground truth"):
        super().__init__(f"prediction for unknown frame {frame_id!r}: {reason}")
        self.frame_id = frame_id


class ShapeMismatch(EndokitError):
    """A tensor does not have the shape required by the model configuration."""


class NonFinite(EndokitError):
    """A numeric result contains NaN or infinity (diagnostic guard)."""

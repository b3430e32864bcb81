"""Exception hierarchy.

Every domain error carries a short ``code`` so the CLI can print
``ERROR <code> <context>`` without a lookup table.
"""

from __future__ import annotations


class DemoSyncError(Exception):
    code = "DemoSyncError"

    def __init__(self, context: str = ""):
        super().__init__(context)
        self.context = context

    def diagnostic(self) -> str:
        ctx = " ".join(str(self.context).split())
        return f"ERROR {self.code} {ctx}".rstrip()


# geometry
class OutOfDomain(DemoSyncError):
    """Query time outside a trajectory's span."""

    code = "OutOfDomain"


# latency
class EmptyTrack(DemoSyncError):
    """A pose track with no samples."""

    code = "EmptyTrack"


class DegenerateSignal(DemoSyncError):
    """Signal variance too small to align."""

    code = "DegenerateSignal"


class NoValidOffset(DemoSyncError):
    """No candidate offset had enough overlap."""

    code = "NoValidOffset"


# calibration
class NonMonotonic(DemoSyncError):
    """Calibration sweep counts not monotone in width."""

    code = "NonMonotonic"


class CalibrationFormatError(DemoSyncError):
    """Malformed calibration file."""

    code = "CalibrationFormatError"


# tactile
class TooFewFrames(DemoSyncError):
    """Not enough no-contact frames for a reference."""

    code = "TooFewFrames"


class ShapeMismatch(DemoSyncError):
    """Frame and reference shapes differ."""

    code = "ShapeMismatch"


class EmptyChunk(DemoSyncError):
    """Curation chunk with no frames."""

    code = "EmptyChunk"


# protocol
class BadMagic(DemoSyncError):
    """Record does not start with the EXU1 magic."""

    code = "BadMagic"


class TruncatedRecord(DemoSyncError):
    """Record shorter than its declared length."""

    code = "TruncatedRecord"


class OversizePayload(DemoSyncError):
    """Payload length above the 1 MiB cap."""

    code = "OversizePayload"


class UnknownStream(DemoSyncError):
    """Stream id not in the StreamKind table."""

    code = "UnknownStream"


class PayloadLayoutError(DemoSyncError):
    """Payload bytes do not match the stream layout."""

    code = "PayloadLayoutError"


class CorruptLog(DemoSyncError):
    """Undecodable bytes inside a stream log."""

    code = "CorruptLog"


class SessionFormatError(DemoSyncError):
    """Malformed session directory or header."""

    code = "SessionFormatError"


# episode pipeline
class MissingStream(DemoSyncError):
    """A required stream is absent from the session."""

    code = "MissingStream"


class EmptySpan(DemoSyncError):
    """No overlap between the video and pose clocks."""

    code = "EmptySpan"


class SchemaVersionMismatch(DemoSyncError):
    """Unsupported container schema."""

    code = "SchemaVersionMismatch"


class ChecksumMismatch(DemoSyncError):
    """Container section failed its checksum."""

    code = "ChecksumMismatch"


# simulator / cli
class InvalidScenario(DemoSyncError):
    """Scenario parameters violate their invariants."""

    code = "InvalidScenario"


class IoError(DemoSyncError):
    """Refused or failed file output."""

    code = "IoError"

"""Exception and warning types shared across the package."""

from __future__ import annotations


class ScoreGraphError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ScoreGraphError):
    """Input bytes could not be decoded as a score document."""


class ValidationError(ScoreGraphError):
    """A score violates one or more structural invariants.

    Carries the full violation list so callers can report every offending
    note in one pass.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "score validation failed: " + "; ".join(str(v) for v in self.violations)
        )


class UnsupportedMeterError(ScoreGraphError):
    """Time signature cannot be mapped onto an integral beat grid."""


class ConfigError(ScoreGraphError):
    """Invalid sampler/encoder configuration or misuse of an optional stage."""


class AssemblyError(ScoreGraphError):
    """Subgraph samples cannot be joined into a batch."""


class FileFormatError(ScoreGraphError):
    """Serialized container is malformed, truncated, or version-incompatible."""


class ChecksumError(FileFormatError):
    """A payload section failed its CRC32 check."""


class MidiWarning(UserWarning):
    """Recoverable oddity in a MIDI file (dangling note-on, orphan note-off)."""

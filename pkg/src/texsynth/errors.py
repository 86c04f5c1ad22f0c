"""Exception types shared across the package.

Every data-level failure raises a distinct subclass of :class:`TexsynthError`
so callers (and the CLI exit-code mapping) can tell malformed files, shape
mismatches, and numerical rejects apart without string matching.
"""


class TexsynthError(Exception):
    """Base class for all texsynth data and contract errors."""


class FormatError(TexsynthError):
    """A file does not match the documented container layout."""


class VersionError(FormatError):
    """Container magic is recognized but the version is unsupported."""


class ChecksumError(FormatError):
    """Container payload does not match its whole-file checksum."""


class LengthMismatchError(TexsynthError):
    """Sequences that must share a length do not."""


class NonFiniteError(TexsynthError):
    """An input contains NaN or infinite samples."""


class DomainError(TexsynthError):
    """A value violates a documented range or sign constraint."""


class ModeMismatchError(TexsynthError):
    """A model trained in one texture-code mode was loaded where another was required."""


class UnknownMaterialError(TexsynthError):
    """A material id is not present in the trained table or bank."""

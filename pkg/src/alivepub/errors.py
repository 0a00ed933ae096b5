"""Exception hierarchy shared by every alivepub module."""

from __future__ import annotations

from datetime import date


class AliveError(Exception):
    """Base class for domain errors."""


class NotFound(AliveError, LookupError):
    pass


class UnknownPublication(NotFound):
    pass


class UnknownVersion(NotFound):
    pass


class NoOfficialVersion(NotFound):
    pass


class UnknownBacklink(NotFound):
    pass


class RateLimited(AliveError):
    def __init__(self, message: str, next_allowed: date):
        super().__init__(message)
        self.next_allowed = next_allowed


class InvalidState(AliveError, ValueError):
    pass


class NameParseError(AliveError, ValueError):
    pass


class MetaParseError(AliveError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class MissingMetaRegion(AliveError, ValueError):
    pass


class RenderError(AliveError, ValueError):
    def __init__(self, missing: list[str]):
        super().__init__("cannot render reference, missing: " + ", ".join(missing))
        self.missing = missing


class StyleMismatch(AliveError, ValueError):
    pass


class InvalidURL(AliveError, ValueError):
    pass


class ProviderFailure(AliveError):
    """A provider could not answer; the caller must render nothing."""

    def __init__(self, provider: str, reason: str):
        super().__init__(f"{provider}: {reason}")
        self.provider = provider
        self.reason = reason


class InvalidPolicy(AliveError, ValueError):
    pass


class StorageError(AliveError, OSError):
    pass


class CorruptionError(StorageError):
    pass


class MirrorError(StorageError):
    """The mirror target could not be written; the primary copy is untouched."""

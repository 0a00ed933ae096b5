"""Domain vocabulary: identifiers, versioned names, revisions, meta-attributes.

Everything here is immutable and free of I/O.  Dates are ISO-8601 calendar
dates, instants are UTC with second precision and serialize as
``YYYY-MM-DDTHH:MM:SSZ``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any, Mapping, NewType, Optional

from .errors import NameParseError

MARKER_CHAR = "≈"  # ALMOST EQUAL TO
HASH_ALGORITHM = "sha256"

PublicationId = NewType("PublicationId", str)

_WS = re.compile(r"\s")
_SUFFIX = re.compile(r"^(?P<base>.+?)v(?P<version>[1-9][0-9]*)$", re.DOTALL)


class Track(str, Enum):
    OFFICIAL = "official"
    AUTHOR = "author"


class ResolvePolicy(str, Enum):
    LATEST_ANY = "latest_any"
    LATEST_OFFICIAL = "latest_official"


class Style(str, Enum):
    VANCOUVER = "vancouver"
    HARVARD = "harvard"


class Kind(str, Enum):
    """Living attributes an enrichment report may carry."""

    LINK_STATUS = "link_status"
    DISCOVERED_LINK = "discovered_link"
    RETRACTION = "retraction"
    OPEN_ACCESS = "open_access"
    CITATION_COUNT = "citation_count"
    VISIT_COUNTS = "visit_counts"
    CLICK_COUNT = "click_count"
    BOOKMARK_COUNT = "bookmark_count"
    TRANSLATIONS = "translations"
    RECENT_REVIEW = "recent_review"


ALL_KINDS = tuple(Kind)


def publication_id(value: str) -> PublicationId:
    """Validate and return a publication identifier."""
    if not isinstance(value, str) or not value:
        raise ValueError("publication id must be a non-empty string")
    if _WS.search(value):
        raise ValueError(f"publication id may not contain whitespace: {value!r}")
    if MARKER_CHAR in value:
        raise ValueError(f"publication id may not contain {MARKER_CHAR!r}")
    return PublicationId(value)


def utc_instant(value: datetime) -> datetime:
    """Normalize to an aware UTC datetime truncated to whole seconds."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc).replace(microsecond=0)


def utcnow() -> datetime:
    return utc_instant(datetime.now(timezone.utc))


def format_instant(value: datetime) -> str:
    return utc_instant(value).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_instant(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc_instant(datetime.fromisoformat(text))


def content_hash(body: bytes) -> str:
    return hashlib.new(HASH_ALGORITHM, body).hexdigest()


@dataclass(frozen=True, order=True)
class VersionedName:
    """``<base>`` names the publication as a whole, ``<base>v<n>`` pins version n."""

    base: str
    version: Optional[int] = None

    def __post_init__(self):
        publication_id(self.base)
        if _SUFFIX.match(self.base):
            # would read back as a pinned name
            raise ValueError(f"base {self.base!r} ends in a version suffix")
        if self.version is not None:
            if isinstance(self.version, bool) or not isinstance(self.version, int):
                raise ValueError("version must be an integer")
            if self.version < 1:
                raise ValueError("version numbers start at 1")

    @classmethod
    def parse(cls, text: str) -> "VersionedName":
        return parse_versioned_name(text)

    def pinned(self, version: int) -> "VersionedName":
        return VersionedName(self.base, version)

    def __str__(self) -> str:
        return format_versioned_name(self)


def parse_versioned_name(text: str) -> VersionedName:
    if not text:
        raise NameParseError("empty name")
    m = _SUFFIX.match(text)
    # "v0", "v007" and friends stay part of the base
    try:
        if m:
            return VersionedName(m["base"], int(m["version"]))
        return VersionedName(text)
    except ValueError as exc:
        raise NameParseError(str(exc)) from None


def format_versioned_name(name: VersionedName) -> str:
    if name.version is None:
        return name.base
    return f"{name.base}v{name.version}"


@dataclass(frozen=True)
class RevisionRecord:
    version: int
    timestamp: datetime
    content_hash: str
    note: str = ""
    track: Track = Track.OFFICIAL
    hash_algorithm: str = HASH_ALGORITHM

    @property
    def date(self) -> date:
        return self.timestamp.date()

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "timestamp": format_instant(self.timestamp),
            "content_hash": self.content_hash,
            "hash_algorithm": self.hash_algorithm,
            "note": self.note,
            "track": self.track.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RevisionRecord":
        return cls(
            version=d["version"],
            timestamp=parse_instant(d["timestamp"]),
            content_hash=d["content_hash"],
            note=d.get("note", ""),
            track=Track(d.get("track", "official")),
            hash_algorithm=d.get("hash_algorithm", HASH_ALGORITHM),
        )


@dataclass(frozen=True)
class AdminEntry:
    """Administrative event in the protocol of changes (retraction, promotion)."""

    version: int
    timestamp: datetime
    action: str
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "timestamp": format_instant(self.timestamp),
            "action": self.action,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AdminEntry":
        return cls(d["version"], parse_instant(d["timestamp"]), d["action"], d.get("note", ""))


@dataclass(frozen=True)
class MetaAttributes:
    """Bibliographic meta-attributes of one publication.

    ``journal``, ``volume`` and ``pages`` are the traditional locator fields;
    ``extra`` keeps keys this package does not interpret.
    """

    title: str = ""
    authors: tuple[str, ...] = ()
    first_online_year: Optional[int] = None
    last_revision_date: Optional[date] = None
    language: str = ""
    url: Optional[str] = None
    doi: Optional[str] = None
    retracted: bool = False
    translation_of: Optional[str] = None
    translations: tuple[str, ...] = ()
    journal: Optional[str] = None
    volume: Optional[str] = None
    pages: Optional[str] = None
    extra: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "translations", tuple(self.translations))
        object.__setattr__(self, "extra", dict(self.extra))
        if (
            self.first_online_year is not None
            and self.last_revision_date is not None
            and self.last_revision_date.year < self.first_online_year
        ):
            raise ValueError("last_revision_date precedes first_online_year")

    @property
    def alive(self) -> bool:
        return self.last_revision_date is not None

    def with_changes(self, **changes) -> "MetaAttributes":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "authors": list(self.authors),
            "first_online_year": self.first_online_year,
            "last_revision_date": self.last_revision_date.isoformat() if self.last_revision_date else None,
            "language": self.language,
            "url": self.url,
            "doi": self.doi,
            "retracted": self.retracted,
            "translation_of": self.translation_of,
            "translations": list(self.translations),
            "journal": self.journal,
            "volume": self.volume,
            "pages": self.pages,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetaAttributes":
        lrd = d.get("last_revision_date")
        return cls(
            title=d.get("title", ""),
            authors=tuple(d.get("authors", ())),
            first_online_year=d.get("first_online_year"),
            last_revision_date=date.fromisoformat(lrd) if lrd else None,
            language=d.get("language", ""),
            url=d.get("url"),
            doi=d.get("doi"),
            retracted=bool(d.get("retracted", False)),
            translation_of=d.get("translation_of"),
            translations=tuple(d.get("translations", ())),
            journal=d.get("journal"),
            volume=d.get("volume"),
            pages=d.get("pages"),
            extra=d.get("extra", {}),
        )


@dataclass(frozen=True)
class LivingReference:
    """A citation of an alive publication as held by the citing document."""

    target: str
    recorded_revision_date: date
    citing_doc: str
    style: Style = Style.VANCOUVER
    stale: bool = False
    acknowledged_at: Optional[datetime] = None
    list_id: Optional[str] = None


@dataclass(frozen=True)
class EnrichmentEntry:
    kind: Kind
    value: Any
    source: str
    fetched_at: datetime

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "source": self.source,
            "fetched_at": format_instant(self.fetched_at),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EnrichmentEntry":
        return cls(Kind(d["kind"]), d["value"], d["source"], parse_instant(d["fetched_at"]))


@dataclass(frozen=True)
class EnrichmentReport:
    """Living facts about one reference, at most one entry per kind.

    A missing kind means the attribute was not requested or its provider
    failed.  ``generated_at`` is when the report was assembled.
    """

    generated_at: datetime
    entries: Mapping[Kind, EnrichmentEntry] = field(default_factory=dict)

    def __post_init__(self):
        for kind, entry in self.entries.items():
            if entry.kind != kind:
                raise ValueError(f"entry filed under {kind} has kind {entry.kind}")
            if entry.fetched_at > self.generated_at:
                raise ValueError("entry fetched after report was generated")

    def get(self, kind: Kind) -> Optional[EnrichmentEntry]:
        return self.entries.get(kind)

    def __contains__(self, kind) -> bool:
        return kind in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "generated_at": format_instant(self.generated_at),
            "entries": [self.entries[k].to_dict() for k in ALL_KINDS if k in self.entries],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EnrichmentReport":
        entries = [EnrichmentEntry.from_dict(e) for e in d.get("entries", [])]
        return cls(parse_instant(d["generated_at"]), {e.kind: e for e in entries})

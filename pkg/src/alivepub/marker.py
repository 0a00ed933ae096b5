"""Meta-attribute blocks in documents and the ≈date≈ living-date marker.

A document carries its own meta-attributes in a fenced block::

    <!--alive-meta
    title = "Notes on a living document"
    authors.0 = "A. N. Author"
    last_revision_date = "2021-03-18"
    bindings.0 = "duty"
    -->

Values are JSON string literals; ``>`` and ``≈`` are always escaped so the
block can sit inside web markup and never contains a marker itself.
``bindings.<n>`` ties the n-th living-date marker of the document to the
publication whose revision date it shows.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Iterable, Mapping, Optional

from .errors import AliveError, MetaParseError, MissingMetaRegion
from .model import MARKER_CHAR, MetaAttributes

logger = logging.getLogger(__name__)

OPEN_FENCE = "<!--alive-meta\n"
CLOSE_FENCE = "-->"

MARKER_RE = re.compile(MARKER_CHAR + r"([0-9]{4})-([0-9]{2})-([0-9]{2})" + MARKER_CHAR)
_LINE_RE = re.compile(r'^([A-Za-z_][A-Za-z0-9_.\-]*) = ("(?:[^"\\]|\\.)*")$')
_INDEXED_RE = re.compile(r"^(authors|translations|bindings)\.(0|[1-9][0-9]*)$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_HEAD_RE = re.compile(r"<head(?:\s[^>]*)?>\n?", re.IGNORECASE)

SCALAR_KEYS = (
    "title", "first_online_year", "last_revision_date", "language", "url", "doi",
    "retracted", "translation_of", "journal", "volume", "pages",
)
RESERVED_PREFIXES = ("authors.", "translations.", "bindings.")


# -- MetaBlock ---------------------------------------------------------------


def encode_value(value: str) -> str:
    text = json.dumps(value, ensure_ascii=False)
    return text.replace(">", "\\u003e").replace(MARKER_CHAR, "\\u2248")


@dataclass
class MetaBlock:
    """Ordered key/value pairs; ``span`` is where the block sits in its document."""

    pairs: list[tuple[str, str]] = field(default_factory=list)
    span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        seen = set()
        for key, value in self.pairs:
            if not _KEY_RE.match(key):
                raise ValueError(f"bad meta key {key!r}")
            if key in seen:
                raise ValueError(f"duplicate meta key {key!r}")
            if not isinstance(value, str):
                raise TypeError(f"meta value for {key!r} must be a string")
            seen.add(key)

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)

    def serialize(self) -> str:
        body = "".join(f"{k} = {encode_value(v)}\n" for k, v in self.pairs)
        return OPEN_FENCE + body + CLOSE_FENCE + "\n"


def find_meta_block(doc: str) -> Optional[MetaBlock]:
    """Locate and parse the document's meta block, or return None."""
    start = doc.find(OPEN_FENCE)
    if start < 0:
        return None
    pos = start + len(OPEN_FENCE)
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    while True:
        if pos >= len(doc):
            raise MetaParseError("unterminated meta block", start)
        nl = doc.find("\n", pos)
        line = doc[pos:] if nl < 0 else doc[pos:nl]
        end = len(doc) if nl < 0 else nl + 1
        if line == CLOSE_FENCE:
            return MetaBlock(pairs, (start, end))
        if nl < 0:
            raise MetaParseError("unterminated meta block", start)
        m = _LINE_RE.match(line)
        if not m:
            raise MetaParseError(f"malformed meta line {line!r}", pos)
        key = m.group(1)
        if key in seen:
            raise MetaParseError(f"duplicate meta key {key!r}", pos)
        try:
            value = json.loads(m.group(2))
        except ValueError:
            raise MetaParseError(f"bad value for {key!r}", pos + len(key) + 3) from None
        seen.add(key)
        pairs.append((key, value))
        pos = end


def write_meta_block(doc: str, block: MetaBlock, *, strict: bool = False) -> str:
    """Replace the document's meta block, or insert one at the head."""
    existing = find_meta_block(doc)
    text = block.serialize()
    if existing is not None:
        a, b = existing.span
        if b == len(doc) and not doc.endswith("\n"):
            text = text[:-1]
        return doc[:a] + text + doc[b:]
    if strict:
        raise MissingMetaRegion("document has no alive-meta block")
    head = _HEAD_RE.search(doc)
    at = head.end() if head else 0
    return doc[:at] + text + doc[at:]


# -- MetaAttributes <-> MetaBlock ---------------------------------------------


def meta_to_pairs(attrs: MetaAttributes) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    if attrs.title:
        pairs.append(("title", attrs.title))
    pairs += [(f"authors.{i}", a) for i, a in enumerate(attrs.authors)]
    if attrs.first_online_year is not None:
        pairs.append(("first_online_year", str(attrs.first_online_year)))
    if attrs.last_revision_date is not None:
        pairs.append(("last_revision_date", attrs.last_revision_date.isoformat()))
    for key in ("language", "url", "doi"):
        if getattr(attrs, key):
            pairs.append((key, getattr(attrs, key)))
    if attrs.retracted:
        pairs.append(("retracted", "true"))
    if attrs.translation_of:
        pairs.append(("translation_of", attrs.translation_of))
    pairs += [(f"translations.{i}", t) for i, t in enumerate(attrs.translations)]
    for key in ("journal", "volume", "pages"):
        if getattr(attrs, key) is not None:
            pairs.append((key, getattr(attrs, key)))
    for key, value in attrs.extra.items():
        if key in SCALAR_KEYS or key.startswith(RESERVED_PREFIXES) or not _KEY_RE.match(key):
            raise ValueError(f"extra key {key!r} is reserved or malformed")
        pairs.append((key, value))
    return pairs


def pairs_to_meta(pairs: Iterable[tuple[str, str]], offset: int = 0) -> MetaAttributes:
    fields: dict = {}
    authors: dict[int, str] = {}
    translations: dict[int, str] = {}
    extra: dict[str, str] = {}
    for key, value in pairs:
        m = _INDEXED_RE.match(key)
        if m:
            if m.group(1) == "authors":
                authors[int(m.group(2))] = value
            elif m.group(1) == "translations":
                translations[int(m.group(2))] = value
            continue
        if key == "first_online_year":
            if not re.fullmatch(r"-?[0-9]+", value):
                raise MetaParseError(f"first_online_year is not a year: {value!r}", offset)
            fields[key] = int(value)
        elif key == "last_revision_date":
            try:
                fields[key] = _strict_date(value)
            except ValueError:
                raise MetaParseError(f"last_revision_date is not a date: {value!r}", offset) from None
        elif key == "retracted":
            if value not in ("true", "false"):
                raise MetaParseError(f"retracted must be true or false: {value!r}", offset)
            fields[key] = value == "true"
        elif key in SCALAR_KEYS:
            fields[key] = value
        elif not key.startswith(RESERVED_PREFIXES):
            extra[key] = value
    try:
        return MetaAttributes(
            authors=tuple(authors[i] for i in sorted(authors)),
            translations=tuple(translations[i] for i in sorted(translations)),
            extra=extra,
            **fields,
        )
    except ValueError as exc:
        raise MetaParseError(str(exc), offset) from None


def _strict_date(text: str) -> date:
    if not re.fullmatch(r"[0-9]{4}-[0-9]{2}-[0-9]{2}", text):
        raise ValueError(text)
    return date.fromisoformat(text)


def get_bindings(doc: str) -> dict[int, str]:
    block = find_meta_block(doc)
    if block is None:
        return {}
    out = {}
    for key, value in block.pairs:
        m = _INDEXED_RE.match(key)
        if m and m.group(1) == "bindings":
            out[int(m.group(2))] = value
    return out


def embed_meta(doc: str, attrs: MetaAttributes, *, strict: bool = False) -> str:
    """Write ``attrs`` into the document's meta block, keeping its bindings."""
    bindings = get_bindings(doc)
    pairs = meta_to_pairs(attrs) + [(f"bindings.{i}", t) for i, t in sorted(bindings.items())]
    return write_meta_block(doc, MetaBlock(pairs), strict=strict)


def extract_meta(doc: str) -> MetaAttributes:
    block = find_meta_block(doc)
    if block is None:
        return MetaAttributes()
    return pairs_to_meta(block.pairs, block.span[0])


def set_bindings(doc: str, bindings: Mapping[int, str], *, strict: bool = False) -> str:
    block = find_meta_block(doc) or MetaBlock()
    pairs = [(k, v) for k, v in block.pairs if not k.startswith("bindings.")]
    pairs += [(f"bindings.{i}", t) for i, t in sorted(bindings.items())]
    return write_meta_block(doc, MetaBlock(pairs), strict=strict)


# -- living-date markers -------------------------------------------------------


@dataclass(frozen=True)
class LivingDateMarker:
    span: tuple[int, int]
    date: date
    target: Optional[str] = None

    @property
    def text(self) -> str:
        return format_marker(self.date)


@dataclass(frozen=True)
class MalformedMarker:
    span: tuple[int, int]
    text: str
    reason: str


@dataclass
class ScanResult:
    markers: list[LivingDateMarker]
    malformed: list[MalformedMarker]


def format_marker(d: date) -> str:
    return f"{MARKER_CHAR}{d.isoformat()}{MARKER_CHAR}"


def scan_document(text: str, bindings: Optional[Mapping[int, str]] = None) -> ScanResult:
    """Find every well-formed marker; calendar-invalid candidates are reported."""
    bindings = bindings or {}
    markers: list[LivingDateMarker] = []
    malformed: list[MalformedMarker] = []
    pos = 0
    while True:
        m = MARKER_RE.search(text, pos)
        if m is None:
            break
        try:
            d = date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        except ValueError as exc:
            malformed.append(MalformedMarker(m.span(), m.group(0), str(exc)))
            logger.warning("skipping malformed date marker %s at %d: %s", m.group(0), m.start(), exc)
            # the closing character may open a valid marker
            pos = m.end() - 1
            continue
        markers.append(LivingDateMarker(m.span(), d, bindings.get(len(markers))))
        pos = m.end()
    return ScanResult(markers, malformed)


def scan_living_dates(text: str) -> list[LivingDateMarker]:
    return scan_document(text).markers


@dataclass
class RefreshResult:
    text: str
    changed: list[int]
    unresolved: dict[int, str]


DateReader = Callable[[str], date]


def refresh_with_report(text: str, bindings: Mapping[int, str], reader: DateReader) -> RefreshResult:
    """Rewrite bound markers to their targets' current revision dates.

    Only the date characters of bound markers change.  A target the reader
    cannot resolve leaves its marker untouched and is reported.
    """
    scan = scan_document(text, bindings)
    pieces: list[str] = []
    last = 0
    changed: list[int] = []
    unresolved: dict[int, str] = {}
    for idx in sorted(set(bindings) - set(range(len(scan.markers)))):
        unresolved[idx] = "no such marker"
    for idx, marker in enumerate(scan.markers):
        if marker.target is None:
            continue
        try:
            current = reader(marker.target)
        except AliveError as exc:
            unresolved[idx] = f"{marker.target}: {exc}"
            continue
        if current == marker.date:
            continue
        a, b = marker.span
        pieces.append(text[last:a])
        pieces.append(format_marker(current))
        last = b
        changed.append(idx)
    pieces.append(text[last:])
    return RefreshResult("".join(pieces), changed, unresolved)


def refresh_living_dates(text: str, bindings: Mapping[int, str], reader: DateReader) -> str:
    result = refresh_with_report(text, bindings, reader)
    for idx, reason in result.unresolved.items():
        logger.warning("marker %d left unchanged: %s", idx, reason)
    return result.text


def refresh_document(doc: str, reader: DateReader) -> RefreshResult:
    """Refresh using the binding table stored in the document's meta block."""
    return refresh_with_report(doc, get_bindings(doc), reader)


def format_harvard_reference(author: str, first_year: int, last_rev: date) -> str:
    return f"({author}, {first_year}, {format_marker(last_rev)})"

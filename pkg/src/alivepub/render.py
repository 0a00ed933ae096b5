"""Text and web-markup forms of living bibliographic references.

Reference list entries come in Vancouver (numbered) or extended Harvard
(author-date) flavour.  An alive target gets ``Last updated ≈<date>≈.``
in front of its URL; living values from an enrichment report follow the
URL in a fixed order (link state, access, citations, visits, clicks,
bookmarks, translations, recent review).  In the markup every living value
is wrapped in a span carrying ``data-source`` and ``data-fetched-at``.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime
from html import escape
from typing import Callable, Iterable, Optional

from .errors import RenderError, StyleMismatch
from .marker import format_harvard_reference, format_marker
from .model import MARKER_CHAR, EnrichmentReport, Kind, MetaAttributes, Style, format_instant

LANGUAGES = {
    "ru": "Russian", "de": "German", "fr": "French", "es": "Spanish", "it": "Italian",
    "pt": "Portuguese", "uk": "Ukrainian", "zh": "Chinese", "ja": "Japanese", "pl": "Polish",
}
RETRACTION_NOTICE = "RETRACTED:"
_WORD_JOINER = "⁠"


@dataclass(frozen=True)
class RenderedReference:
    plain_text: str
    markup_fragment: str
    style: Style
    contains_living_fields: bool

    def to_dict(self) -> dict:
        return {
            "plain_text": self.plain_text,
            "markup_fragment": self.markup_fragment,
            "style": self.style.value,
            "contains_living_fields": self.contains_living_fields,
        }


@dataclass(frozen=True)
class RenderConfig:
    """``locators``: "auto" shows volume/pages only for references without a URL."""

    locators: str = "auto"

    def __post_init__(self):
        if self.locators not in ("auto", "always", "never"):
            raise ValueError(f"bad locators setting {self.locators!r}")


def _neutral(s: str) -> str:
    # static text must never read as a living-date marker
    return s.replace(MARKER_CHAR, MARKER_CHAR + _WORD_JOINER)


class _Builder:
    def __init__(self):
        self.plain: list[str] = []
        self.markup: list[str] = []
        self.living = False

    def text(self, s: str) -> None:
        s = _neutral(s)
        self.plain.append(s)
        self.markup.append(escape(s, quote=False))

    def raw(self, plain: str, markup: str) -> None:
        self.plain.append(plain)
        self.markup.append(markup)

    def field(self, css: str, plain: str, source: str, fetched_at: datetime, inner: Optional[str] = None,
              **data) -> None:
        self.living = True
        attrs = "".join(f' data-{k.replace("_", "-")}="{escape(str(v))}"' for k, v in data.items())
        self.plain.append(plain)
        self.markup.append(
            f'<span class="alive-field alive-{css}" data-source="{escape(source)}" '
            f'data-fetched-at="{format_instant(fetched_at)}"{attrs}>'
            f"{inner if inner is not None else escape(plain, quote=False)}</span>"
        )


def _language_note(tag: str) -> str:
    tag = (tag or "").strip()
    if not tag or tag.lower().split("-")[0] == "en":
        return ""
    return f" (In {LANGUAGES.get(tag.lower().split('-')[0], tag)})"


def _url_markup(url: str) -> str:
    return f'&lt;<a href="{escape(url)}">{escape(url, quote=False)}</a>&gt;'


def render_reference(meta: MetaAttributes, report: EnrichmentReport, style: Style = Style.VANCOUVER,
                     config: RenderConfig = RenderConfig()) -> RenderedReference:
    """Compose a reference list entry from meta-attributes and living data."""
    style = Style(style)
    missing = [name for name, ok in (("title", bool(meta.title)), ("authors", bool(meta.authors))) if not ok]
    if missing:
        raise RenderError(missing)
    b = _Builder()
    b.raw("", f'<span class="alive-ref" data-style="{style.value}">')

    retraction = report.get(Kind.RETRACTION)
    if retraction is not None and retraction.value:
        b.field("retraction", RETRACTION_NOTICE, retraction.source, retraction.fetched_at,
                inner=f"<strong>{RETRACTION_NOTICE}</strong>")
        b.text(" ")
    elif meta.retracted:
        b.field("retraction", RETRACTION_NOTICE, "meta", report.generated_at,
                inner=f"<strong>{RETRACTION_NOTICE}</strong>")
        b.text(" ")

    url = meta.url
    url_source = None
    discovered = report.get(Kind.DISCOVERED_LINK)
    if not url and discovered is not None and discovered.value:
        url, url_source = discovered.value, discovered
    show_locators = config.locators == "always" or (config.locators == "auto" and not url)
    locator = ", ".join(x for x in (meta.volume, meta.pages) if x) if show_locators else ""
    year = f"({meta.first_online_year})" if meta.first_online_year is not None else ""

    if style == Style.VANCOUVER:
        b.text(", ".join(meta.authors) + ", " + meta.title + ".")
        source_bits = []
        if meta.journal:
            source_bits.append(meta.journal + ".")
        tail = " ".join(x for x in (locator, year) if x)
        if tail:
            source_bits.append(tail)
        if source_bits:
            b.text(" " + " ".join(source_bits))
    else:
        head = ", ".join(meta.authors)
        b.text(head + (f" {year}" if year else "") + " " + meta.title + ".")
        source = meta.journal or ""
        if locator:
            source = f"{source}, {locator}" if source else locator
        if source:
            b.text(" " + source)
    lang = _language_note(meta.language)
    if lang:
        b.text(lang)
    if not b.plain[-1].endswith("."):
        b.text(".")

    if meta.alive:
        b.text(" Last updated ")
        d = meta.last_revision_date
        b.field("last-updated", format_marker(d), "meta", report.generated_at, date=d.isoformat())
        b.text(".")

    link = report.get(Kind.LINK_STATUS)
    if url:
        b.text(" ")
        if url_source is not None:
            b.field("discovered-link", f"<{url}>", url_source.source, url_source.fetched_at,
                    inner=_url_markup(url))
        else:
            b.raw(_neutral(f"<{url}>"), _url_markup(url))
        if link is not None:
            state = link.value["state"]
            if state == "broken":
                b.text(" ")
                b.field("link-status", "[broken link]", link.source, link.fetched_at, state=state)
            elif state == "timeout":
                b.text(" ")
                b.field("link-status", "[link not responding]", link.source, link.fetched_at, state=state)
            elif state == "redirect":
                final = link.value["final_url"]
                b.text(" ")
                b.field("link-status", f"[moved to <{final}>]", link.source, link.fetched_at,
                        inner=f"[moved to {_url_markup(final)}]", state=state)
            else:
                b.field("link-status", "", link.source, link.fetched_at, state=state)

    for kind, css, fmt in _SUFFIX_FIELDS:
        entry = report.get(kind)
        if entry is None:
            continue
        text = fmt(entry.value)
        if text:
            b.text(" ")
            b.field(css, text, entry.source, entry.fetched_at)
    b.raw("", "</span>")
    return RenderedReference("".join(b.plain), "".join(b.markup), style, b.living)


def _fmt_access(v) -> str:
    mode = v["mode"]
    if mode == "embargoed" and v.get("embargo_until"):
        return f"Access: embargoed until {v['embargo_until']}."
    return f"Access: {mode}." if mode != "unknown" else ""


def _fmt_citations(v) -> str:
    if not v:
        return ""
    return "Cited: " + ", ".join(f"{n} ({src})" for src, n in sorted(v.items())) + "."


def _fmt_visits(v) -> str:
    return f"Visits: {v['total']} ({v['last_30_days']} in the last 30 days)."


_SUFFIX_FIELDS = (
    (Kind.OPEN_ACCESS, "open-access", _fmt_access),
    (Kind.CITATION_COUNT, "citation-count", _fmt_citations),
    (Kind.VISIT_COUNTS, "visit-counts", _fmt_visits),
    (Kind.CLICK_COUNT, "click-count", lambda v: f"Clicks from this list: {v}."),
    (Kind.BOOKMARK_COUNT, "bookmark-count", lambda v: f"Bookmarks: {v}."),
    (Kind.TRANSLATIONS, "translations", lambda v: f"Translations: {', '.join(v)}." if v else ""),
    (Kind.RECENT_REVIEW, "recent-review", lambda v: "Recently reviewed." if v else ""),
)


def render_intext(style: Style, author: Optional[str] = None, first_year: Optional[int] = None,
                  last_rev: Optional[date] = None, number: Optional[int] = None) -> str:
    """In-text citation: ``[n]`` for Vancouver, ``(author, year[, ≈date≈])`` for Harvard."""
    style = Style(style)
    if style == Style.VANCOUVER:
        if number is None:
            raise StyleMismatch("Vancouver citations need a reference number")
        return f"[{number}]"
    if not author or first_year is None:
        raise StyleMismatch("Harvard citations need an author and a year")
    if last_rev is None:
        return f"({author}, {first_year})"
    return format_harvard_reference(author, first_year, last_rev)


def render_cited_by(pub_id: str, backlinks: Callable[[str], Iterable], meta_lookup: Callable[[str], Optional[MetaAttributes]],
                    as_of: datetime, style: Style = Style.VANCOUVER,
                    config: RenderConfig = RenderConfig()) -> list[RenderedReference]:
    """Reverse list: every registered citing document, newest recorded date first.

    A citing document without enough metadata is listed by its identifier.
    """
    links = sorted(backlinks(pub_id), key=lambda l: l.citing_doc)
    links.sort(key=lambda l: l.recorded_revision_date, reverse=True)
    empty = EnrichmentReport(as_of)
    out = []
    for link in links:
        meta = meta_lookup(link.citing_doc) or link.citing_meta
        try:
            if meta is None:
                raise RenderError(["title", "authors"])
            out.append(render_reference(meta, empty, style, config))
        except RenderError:
            out.append(RenderedReference(
                link.citing_doc,
                f'<span class="alive-ref alive-unresolved">{escape(link.citing_doc, quote=False)}</span>',
                Style(style), False,
            ))
    return out

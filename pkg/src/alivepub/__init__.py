"""Alive publications: versioned scholarly works and living bibliographic references."""

from .errors import AliveError, NotFound, RateLimited
from .ledger import PromotionPolicy, VersionLedger
from .marker import embed_meta, extract_meta, refresh_living_dates, scan_living_dates
from .model import (
    EnrichmentReport,
    Kind,
    LivingReference,
    MetaAttributes,
    ResolvePolicy,
    RevisionRecord,
    Style,
    Track,
    VersionedName,
    format_versioned_name,
    parse_versioned_name,
)
from .registry import RefreshPolicy, Registry
from .render import RenderConfig, RenderedReference, render_cited_by, render_intext, render_reference
from .store import RecordStore

__version__ = "0.1.0"

__all__ = [
    "AliveError", "NotFound", "RateLimited", "PromotionPolicy", "VersionLedger",
    "embed_meta", "extract_meta", "refresh_living_dates", "scan_living_dates",
    "EnrichmentReport", "Kind", "LivingReference", "MetaAttributes", "ResolvePolicy", "RevisionRecord",
    "Style", "Track", "VersionedName", "format_versioned_name", "parse_versioned_name",
    "RefreshPolicy", "Registry", "RenderConfig", "RenderedReference", "render_cited_by",
    "render_intext", "render_reference", "RecordStore",
]

"""The assembled registry: store, ledger, backlinks, indirection, mirror, enrichment."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from datetime import datetime, time, timedelta
from typing import Callable, Iterable, Optional, Sequence

from .enrich import (
    EnrichmentCache,
    EnrichmentPolicy,
    Enricher,
    LedgerProvider,
    Provider,
    Target,
    UsageProvider,
    check_retraction,
)
from .errors import MirrorError, NotFound
from .ledger import PromotionPolicy, VersionLedger
from .model import Kind, LivingReference, MetaAttributes, RevisionRecord, Style, Track, format_instant, utcnow
from .notify import StalenessNotifier
from .render import RenderConfig, RenderedReference, render_cited_by, render_reference
from .store import DirectoryMirror, IndirectionTable, MirrorSync, RecordStore, UsageCounters

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefreshPolicy:
    """How living data reaches readers.

    ``on_the_fly`` enriches at request time.  ``nightly`` refreshes a cache
    once a day at ``nightly_at`` (UTC) and serves requests from it only.
    """

    mode: str = "on_the_fly"
    nightly_at: time = time(3, 0)
    ttl_hours: int = 24

    def __post_init__(self):
        if self.mode not in ("on_the_fly", "nightly"):
            raise ValueError(f"unknown refresh mode {self.mode!r}")
        if self.ttl_hours < 0:
            raise ValueError("ttl_hours must not be negative")
        if self.mode == "nightly" and self.ttl_hours < 24:
            raise ValueError("nightly refresh needs ttl_hours >= 24")

    @property
    def ttl(self) -> timedelta:
        return timedelta(hours=self.ttl_hours)

    def next_run(self, now: datetime) -> datetime:
        run = now.replace(hour=self.nightly_at.hour, minute=self.nightly_at.minute, second=0, microsecond=0)
        return run if run > now else run + timedelta(days=1)


@dataclass
class RefreshSummary:
    at: datetime
    refreshed: int = 0
    failed: int = 0
    fresh: int = 0
    failed_ids: tuple = ()

    def to_dict(self) -> dict:
        return {
            "at": format_instant(self.at),
            "refreshed": self.refreshed,
            "failed": self.failed,
            "fresh": self.fresh,
            "failed_ids": list(self.failed_ids),
        }


class Registry:
    def __init__(self, store: RecordStore, *, mirror_target=None, providers: Sequence[Provider] = (),
                 clock: Callable[[], datetime] = utcnow, promotion: PromotionPolicy = PromotionPolicy(),
                 refresh: RefreshPolicy = RefreshPolicy()):
        self.store = store
        self.clock = clock
        self.promotion = promotion
        self.refresh_policy = refresh
        self.ledger = VersionLedger(store, clock)
        self.indirection = IndirectionTable(store, clock)
        self.usage = UsageCounters(store, clock)
        self.notifier = StalenessNotifier(store, self.ledger, clock)
        self.mirror = MirrorSync(store, mirror_target, self._latest_body, clock) if mirror_target else None
        self.enricher = Enricher(
            [LedgerProvider(self.ledger), UsageProvider(self.usage, clock=clock), *providers],
            cache=EnrichmentCache(store), clock=clock, describe=self.describe,
        )
        self.ledger.listeners.append(self._after_publish)

    @classmethod
    def open(cls, path: os.PathLike | str, mirror: Optional[os.PathLike | str] = None, **kw) -> "Registry":
        return cls(RecordStore(path), mirror_target=DirectoryMirror(mirror) if mirror else None, **kw)

    def close(self):
        self.enricher.close()

    # -- wiring -----------------------------------------------------------

    def _latest_body(self, pub_id: str) -> tuple[int, str]:
        rev = self.ledger.latest(pub_id)
        return rev.version, rev.content_hash

    def _after_publish(self, pub_id: str, record: RevisionRecord) -> None:
        if self.mirror is not None:
            try:
                self.mirror.mirror_sync(pub_id)
            except MirrorError as exc:
                logger.warning("mirror copy of %s is behind, will retry: %s", pub_id, exc)
        self.notifier.on_revision(pub_id, record.date, record.version)

    def publish(self, pub_id: str, body: bytes, note: str = "", track: Track = Track.OFFICIAL,
                at: Optional[datetime] = None, meta: Optional[MetaAttributes] = None,
                url: Optional[str] = None) -> RevisionRecord:
        rec = self.ledger.publish_revision(pub_id, body, note, track, at, meta)
        if url is not None:
            try:
                if self.indirection.resolve_id(pub_id) != url:
                    self.indirection.remap(pub_id, url)
            except NotFound:
                self.indirection.put(pub_id, url)
        return rec

    # -- reading ----------------------------------------------------------

    def current_url(self, pub_id: str) -> Optional[str]:
        try:
            return self.indirection.resolve_id(pub_id)
        except NotFound:
            return self.ledger.meta(pub_id).url

    def meta_for_render(self, pub_id: str) -> MetaAttributes:
        """Meta-attributes with the URL taken from the indirection table."""
        meta = self.ledger.meta(pub_id)
        return meta.with_changes(url=self.current_url(pub_id))

    def describe(self, pub_id: str) -> Target:
        try:
            meta = self.meta_for_render(pub_id)
        except NotFound:
            return Target(pub_id)
        return Target(pub_id, meta.url, meta)

    def check_retraction(self, pub_id: str) -> bool:
        remote = [p for p in self.enricher.providers_for(Kind.RETRACTION) if not p.local]
        return check_retraction(pub_id, self.ledger, remote[0] if remote else None)

    def enrichment_policy(self, kinds: Optional[Iterable[Kind]] = None) -> EnrichmentPolicy:
        mode = "cache_only" if self.refresh_policy.mode == "nightly" else "on_the_fly"
        kinds = frozenset(Kind(k) for k in kinds) if kinds is not None else frozenset(Kind)
        return EnrichmentPolicy(kinds=kinds, mode=mode, ttl=self.refresh_policy.ttl)

    def render(self, pub_id: str, style: Style = Style.VANCOUVER, kinds: Optional[Iterable[Kind]] = None,
               list_id: Optional[str] = None, config: RenderConfig = RenderConfig()):
        meta = self.meta_for_render(pub_id)
        ref = LivingReference(pub_id, meta.last_revision_date or self.clock().date(), "", Style(style),
                              list_id=list_id)
        report = self.enricher.enrich(ref, self.enrichment_policy(kinds))
        return render_reference(meta, report, style, config), report

    def cited_by(self, pub_id: str, style: Style = Style.VANCOUVER) -> list[RenderedReference]:
        self.ledger.meta(pub_id)  # not-found check
        snap = self.store.snapshot(StalenessNotifier.NS, VersionLedger.NS)

        def meta_lookup(doc: str) -> Optional[MetaAttributes]:
            rec = snap[VersionLedger.NS].get(doc)
            if rec is None:
                return None
            meta = MetaAttributes.from_dict(rec["meta"])
            return meta.with_changes(url=self.current_url(doc))

        return render_cited_by(
            pub_id, lambda t: self.notifier.backlinks_to(t, snap[StalenessNotifier.NS]),
            meta_lookup, self.clock(), style,
        )

    # -- nightly refresh --------------------------------------------------

    def remote_kinds(self) -> frozenset:
        return frozenset(k for p in self.enricher.providers if not p.local for k in p.kinds)

    def run_nightly_refresh(self, now: Optional[datetime] = None) -> RefreshSummary:
        """Re-enrich every publication whose cached living data is older than the TTL.

        A failed provider keeps its previous cached value (and timestamp).
        Mirror copies left behind by earlier faults are retried first.
        """
        now = now or self.clock()
        if self.mirror is not None:
            self.mirror.retry_pending()
        kinds = self.remote_kinds() - {Kind.CLICK_COUNT}
        summary = RefreshSummary(now)
        failed_ids = []
        ttl = self.refresh_policy.ttl
        for pub_id in self.ledger.ids():
            if not kinds:
                summary.fresh += 1
                continue
            entries = [self.enricher.cache.get(EnrichmentCache.key(pub_id, k)) for k in kinds]
            if entries and all(e is not None and now - e.fetched_at < ttl for e in entries):
                summary.fresh += 1
                continue
            ref = LivingReference(pub_id, now.date(), "")
            outcome = self.enricher.enrich_detailed(ref, EnrichmentPolicy(kinds=kinds, mode="on_the_fly", ttl=ttl))
            if outcome.failures:
                summary.failed += 1
                failed_ids.append(pub_id)
            else:
                summary.refreshed += 1
        summary.failed_ids = tuple(failed_ids)
        return summary

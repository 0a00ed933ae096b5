"""Revision ledger of alive publications.

Every publication carries a gapless, unlimited sequence of numbered
revisions.  A bare name resolves to the newest revision admitted by the
resolve policy; ``<id>v<n>`` pins revision n.  Revisions live on one of two
tracks, the reviewed official track and the author's own track; promotion
from author to official is rate limited.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Callable, Optional, Union

from .errors import (
    InvalidState,
    NoOfficialVersion,
    NotFound,
    RateLimited,
    UnknownPublication,
    UnknownVersion,
)
from .model import (
    AdminEntry,
    MetaAttributes,
    ResolvePolicy,
    RevisionRecord,
    Track,
    VersionedName,
    format_instant,
    parse_instant,
    parse_versioned_name,
    publication_id,
    utc_instant,
    utcnow,
)
from .store import RecordStore

logger = logging.getLogger(__name__)

HistoryEntry = Union[RevisionRecord, AdminEntry]
RevisionListener = Callable[[str, RevisionRecord], None]


@dataclass(frozen=True)
class PromotionPolicy:
    min_interval_days: int = 90

    def __post_init__(self):
        if self.min_interval_days < 0:
            raise ValueError("min_interval_days must be non-negative")


@dataclass(frozen=True)
class UpdateStatus:
    queried: VersionedName
    newer_exists: bool
    latest: VersionedName
    latest_timestamp: datetime
    retracted: bool

    def to_dict(self) -> dict:
        return {
            "queried": str(self.queried),
            "newer_exists": self.newer_exists,
            "latest": str(self.latest),
            "latest_timestamp": format_instant(self.latest_timestamp),
            "retracted": self.retracted,
        }


def _as_name(name: Union[str, VersionedName]) -> VersionedName:
    return name if isinstance(name, VersionedName) else parse_versioned_name(name)


class VersionLedger:
    NS = "publications"

    def __init__(self, store: RecordStore, clock: Callable[[], datetime] = utcnow):
        self.store = store
        self.clock = clock
        self.listeners: list[RevisionListener] = []
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, pub_id: str) -> threading.RLock:
        """Per-publication writer lock; listeners run while it is held."""
        with self._locks_guard:
            return self._locks.setdefault(pub_id, threading.RLock())

    # -- raw record access ------------------------------------------------

    def _load(self, pub_id: str) -> dict:
        try:
            return self.store.get(self.NS, pub_id)
        except NotFound:
            raise UnknownPublication(f"unknown publication {pub_id!r}") from None

    def _save(self, rec: dict) -> None:
        self.store.put(self.NS, rec["id"], rec)

    def exists(self, pub_id: str) -> bool:
        return self.store.find(self.NS, pub_id) is not None

    def ids(self) -> list[str]:
        return self.store.keys(self.NS)

    def create(self, pub_id: str, meta: Optional[MetaAttributes] = None) -> MetaAttributes:
        publication_id(pub_id)
        with self.lock(pub_id):
            if self.exists(pub_id):
                raise InvalidState(f"publication {pub_id} already exists")
            meta = meta or MetaAttributes()
            self._save({"id": pub_id, "meta": meta.to_dict(), "events": [], "last_promotion_at": None})
        return meta

    # -- queries ----------------------------------------------------------

    def meta(self, pub_id: str) -> MetaAttributes:
        return MetaAttributes.from_dict(self._load(pub_id)["meta"])

    def revisions(self, pub_id: str) -> list[RevisionRecord]:
        rec = self._load(pub_id)
        return [RevisionRecord.from_dict(e) for e in rec["events"] if e["entry"] == "revision"]

    def history(self, pub_id: str) -> list[HistoryEntry]:
        """Protocol of changes: revisions and administrative entries in order."""
        rec = self._load(pub_id)
        out: list[HistoryEntry] = []
        for e in rec["events"]:
            if e["entry"] == "revision":
                out.append(RevisionRecord.from_dict(e))
            else:
                out.append(AdminEntry.from_dict(e))
        return out

    def last_revision_date(self, pub_id: str) -> date:
        meta = self.meta(pub_id)
        if meta.last_revision_date is None:
            raise UnknownVersion(f"{pub_id} has no revisions")
        return meta.last_revision_date

    def body(self, pub_id: str, version: int) -> bytes:
        rev = self.resolve(VersionedName(pub_id, version))
        return self.store.get_blob(rev.content_hash)

    def latest(self, pub_id: str, policy: ResolvePolicy = ResolvePolicy.LATEST_ANY) -> RevisionRecord:
        revs = self.revisions(pub_id)
        if policy == ResolvePolicy.LATEST_OFFICIAL:
            revs = [r for r in revs if r.track == Track.OFFICIAL]
            if not revs:
                raise NoOfficialVersion(f"{pub_id} has no official revision")
        if not revs:
            raise UnknownVersion(f"{pub_id} has no revisions")
        return revs[-1]

    def resolve(self, name: Union[str, VersionedName],
                policy: ResolvePolicy = ResolvePolicy.LATEST_ANY) -> RevisionRecord:
        name = _as_name(name)
        if name.version is None:
            return self.latest(name.base, ResolvePolicy(policy))
        revs = self.revisions(name.base)
        if name.version > len(revs):
            raise UnknownVersion(f"unknown version {str(name)!r}")
        return revs[name.version - 1]

    def check_for_updates(self, name: Union[str, VersionedName],
                          policy: ResolvePolicy = ResolvePolicy.LATEST_OFFICIAL) -> UpdateStatus:
        """Compare a version against the live ledger, never a cached snapshot.

        With the official policy and no official revision yet, the newest
        revision of any track is the reference point.
        """
        name = _as_name(name)
        try:
            latest = self.latest(name.base, ResolvePolicy(policy))
        except NoOfficialVersion:
            latest = self.latest(name.base, ResolvePolicy.LATEST_ANY)
        queried = latest if name.version is None else self.resolve(name)
        meta = self.meta(name.base)
        return UpdateStatus(
            queried=name.pinned(queried.version),
            newer_exists=queried.version < latest.version,
            latest=name.pinned(latest.version),
            latest_timestamp=latest.timestamp,
            retracted=meta.retracted,
        )

    # -- mutations --------------------------------------------------------

    def publish_revision(self, pub_id: str, body: bytes, note: str = "",
                         track: Track = Track.OFFICIAL, at: Optional[datetime] = None,
                         meta: Optional[MetaAttributes] = None) -> RevisionRecord:
        """Append the next revision; creates the publication on first publish.

        The body blob is written before the ledger record, so a storage
        failure leaves the ledger unchanged.
        """
        publication_id(pub_id)
        if not body:
            raise ValueError("revision body must not be empty")
        track = Track(track)
        with self.lock(pub_id):
            rec = self.store.find(self.NS, pub_id)
            if rec is None:
                rec = {"id": pub_id, "meta": (meta or MetaAttributes()).to_dict(),
                       "events": [], "last_promotion_at": None}
            elif meta is not None:
                # retraction is only changed administratively
                first = meta.first_online_year or rec["meta"].get("first_online_year")
                rec["meta"] = meta.with_changes(retracted=rec["meta"]["retracted"],
                                                last_revision_date=None, first_online_year=first).to_dict()
            revs = [e for e in rec["events"] if e["entry"] == "revision"]
            prev = RevisionRecord.from_dict(revs[-1]) if revs else None
            if at is not None:
                stamp = utc_instant(at)
                if prev is not None and stamp < prev.timestamp:
                    raise InvalidState("revision timestamp precedes the previous revision")
            else:
                stamp = self.clock()
                if prev is not None and stamp < prev.timestamp:
                    stamp = prev.timestamp
            digest = self.store.put_blob(bytes(body))
            record = RevisionRecord(len(revs) + 1, stamp, digest, note, track)
            old_meta = MetaAttributes.from_dict(rec["meta"])
            first_year = old_meta.first_online_year or stamp.year
            new_meta = old_meta.with_changes(last_revision_date=stamp.date(), first_online_year=first_year)
            rec["meta"] = new_meta.to_dict()
            rec["events"] = rec["events"] + [{"entry": "revision", **record.to_dict()}]
            self._save(rec)
            for listener in list(self.listeners):
                try:
                    listener(pub_id, record)
                except Exception:
                    logger.exception("revision listener failed for %s v%d", pub_id, record.version)
        return record

    def update_meta(self, pub_id: str, **changes) -> MetaAttributes:
        """Edit descriptive attributes; revision date and retraction are managed here."""
        forbidden = {"last_revision_date", "retracted"} & set(changes)
        if forbidden:
            raise InvalidState(f"cannot set {', '.join(sorted(forbidden))} directly")
        with self.lock(pub_id):
            rec = self._load(pub_id)
            meta = MetaAttributes.from_dict(rec["meta"]).with_changes(**changes)
            rec["meta"] = meta.to_dict()
            self._save(rec)
        return meta

    def promote(self, pub_id: str, version: int, policy: PromotionPolicy = PromotionPolicy(),
                at: Optional[datetime] = None) -> RevisionRecord:
        at = utc_instant(at) if at is not None else self.clock()
        with self.lock(pub_id):
            rec = self._load(pub_id)
            revs = [e for e in rec["events"] if e["entry"] == "revision"]
            if not 1 <= version <= len(revs):
                raise UnknownVersion(f"unknown version {pub_id}v{version}")
            target = revs[version - 1]
            if target["track"] != Track.AUTHOR.value:
                raise InvalidState(f"{pub_id}v{version} is not on the author track")
            last = rec["last_promotion_at"]
            if last is not None:
                next_allowed = parse_instant(last) + timedelta(days=policy.min_interval_days)
                if at < next_allowed:
                    raise RateLimited(
                        f"{pub_id}: next promotion allowed on {next_allowed.date().isoformat()}",
                        next_allowed.date(),
                    )
            target["track"] = Track.OFFICIAL.value
            rec["last_promotion_at"] = format_instant(at)
            rec["events"].append({"entry": "admin", **AdminEntry(version, at, "promotion").to_dict()})
            self._save(rec)
        return RevisionRecord.from_dict(target)

    def retract(self, pub_id: str, reason: str, at: Optional[datetime] = None) -> None:
        """Flag the publication as retracted; content and history are kept."""
        self._set_retracted(pub_id, True, reason, at)

    def unretract(self, pub_id: str, reason: str, at: Optional[datetime] = None) -> None:
        self._set_retracted(pub_id, False, reason, at)

    def _set_retracted(self, pub_id: str, flag: bool, reason: str, at: Optional[datetime]) -> None:
        at = utc_instant(at) if at is not None else self.clock()
        with self.lock(pub_id):
            rec = self._load(pub_id)
            meta = MetaAttributes.from_dict(rec["meta"])
            if meta.retracted == flag:
                return
            revs = [e for e in rec["events"] if e["entry"] == "revision"]
            rec["meta"] = meta.with_changes(retracted=flag).to_dict()
            action = "retraction" if flag else "unretraction"
            rec["events"].append({"entry": "admin", **AdminEntry(len(revs), at, action, reason).to_dict()})
            self._save(rec)

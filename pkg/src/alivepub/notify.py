"""Backlinks from citing documents and "possibly outdated" notifications.

Citing documents register their references here (no open-web pingbacks).
When a cited publication gets a new revision, every reference recorded
against an older revision date turns stale and its citing document gets a
notification in its outbox.  Acknowledging the change makes the reference
current again: a link is stale exactly when the target's last revision date
is later than both the recorded date and the acknowledgement date.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime
from typing import Callable, Optional

from .errors import UnknownBacklink, UnknownPublication
from .model import MetaAttributes, format_instant, parse_instant, utc_instant, utcnow
from .store import RecordStore


@dataclass(frozen=True)
class Backlink:
    citing_doc: str
    target: str
    recorded_revision_date: date
    stale: bool = False
    acknowledged_at: Optional[datetime] = None
    registered_at: Optional[datetime] = None
    citing_meta: Optional[MetaAttributes] = None

    def to_dict(self) -> dict:
        return {
            "citing_doc": self.citing_doc,
            "target": self.target,
            "recorded_revision_date": self.recorded_revision_date.isoformat(),
            "stale": self.stale,
            "acknowledged_at": format_instant(self.acknowledged_at) if self.acknowledged_at else None,
            "registered_at": format_instant(self.registered_at) if self.registered_at else None,
            "citing_meta": self.citing_meta.to_dict() if self.citing_meta else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Backlink":
        return cls(
            citing_doc=d["citing_doc"],
            target=d["target"],
            recorded_revision_date=date.fromisoformat(d["recorded_revision_date"]),
            stale=d["stale"],
            acknowledged_at=parse_instant(d["acknowledged_at"]) if d.get("acknowledged_at") else None,
            registered_at=parse_instant(d["registered_at"]) if d.get("registered_at") else None,
            citing_meta=MetaAttributes.from_dict(d["citing_meta"]) if d.get("citing_meta") else None,
        )


@dataclass(frozen=True)
class Notification:
    citing_doc: str
    target: str
    new_version: int
    new_date: date
    created_at: datetime

    def to_dict(self) -> dict:
        return {
            "citing_doc": self.citing_doc,
            "target": self.target,
            "new_version": self.new_version,
            "new_date": self.new_date.isoformat(),
            "created_at": format_instant(self.created_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Notification":
        return cls(d["citing_doc"], d["target"], d["new_version"],
                   date.fromisoformat(d["new_date"]), parse_instant(d["created_at"]))


def is_stale(current: Optional[date], recorded: date, acknowledged_at: Optional[datetime]) -> bool:
    if current is None:
        return False
    seen = max(recorded, acknowledged_at.date()) if acknowledged_at else recorded
    return current > seen


def _key(citing_doc: str, target: str) -> str:
    return json.dumps([citing_doc, target], ensure_ascii=False)


class StalenessNotifier:
    NS = "backlinks"
    OUTBOX = "notifications"

    def __init__(self, store: RecordStore, ledger, clock: Callable[[], datetime] = utcnow):
        self.store = store
        self.ledger = ledger
        self.clock = clock

    def _current_date(self, target: str) -> Optional[date]:
        if not self.ledger.exists(target):
            raise UnknownPublication(f"unknown publication {target!r}")
        return self.ledger.meta(target).last_revision_date

    def register_backlink(self, citing_doc: str, target: str, recorded_revision_date: date,
                          citing_meta: Optional[MetaAttributes] = None) -> Backlink:
        """Record that ``citing_doc`` cites ``target`` as of a revision date.

        Registering again replaces the earlier record, acknowledgement included.
        """
        if not citing_doc:
            raise ValueError("citing_doc must not be empty")
        with self.store.transaction():
            current = self._current_date(target)
            link = Backlink(
                citing_doc, target, recorded_revision_date,
                stale=is_stale(current, recorded_revision_date, None),
                registered_at=self.clock(),
                citing_meta=citing_meta,
            )
            self.store.put(self.NS, _key(citing_doc, target), link.to_dict())
        return link

    def get(self, citing_doc: str, target: str) -> Backlink:
        d = self.store.find(self.NS, _key(citing_doc, target))
        if d is None:
            raise UnknownBacklink(f"no backlink {citing_doc} -> {target}")
        return Backlink.from_dict(d)

    def all(self) -> list[Backlink]:
        return [Backlink.from_dict(d) for d in self.store.list(self.NS).values()]

    def backlinks_to(self, target: str, snapshot: Optional[dict] = None) -> list[Backlink]:
        records = snapshot if snapshot is not None else self.store.list(self.NS)
        return [Backlink.from_dict(d) for d in records.values() if d["target"] == target]

    def on_revision(self, target: str, new_date: date, new_version: int) -> list[Notification]:
        """Mark references recorded before ``new_date`` stale and notify them.

        Only links that were current until now get a notification; a link
        that is already stale was notified before.
        """
        now = self.clock()
        sent: list[Notification] = []
        with self.store.transaction():
            for link in self.backlinks_to(target):
                if link.stale or not is_stale(new_date, link.recorded_revision_date, link.acknowledged_at):
                    continue
                stale = Backlink(link.citing_doc, link.target, link.recorded_revision_date, True,
                                 link.acknowledged_at, link.registered_at, link.citing_meta)
                self.store.put(self.NS, _key(link.citing_doc, target), stale.to_dict())
                note = Notification(link.citing_doc, target, new_version, new_date, now)
                if self._enqueue(note):
                    sent.append(note)
        return sent

    def acknowledge(self, citing_doc: str, target: str, at: Optional[datetime] = None) -> Backlink:
        """The citing author has looked at the change; the reference is current again."""
        at = utc_instant(at) if at is not None else self.clock()
        with self.store.transaction():
            link = self.get(citing_doc, target)
            stale = is_stale(self._current_date(target), link.recorded_revision_date, at)
            acked = Backlink(citing_doc, target, link.recorded_revision_date, stale, at,
                             link.registered_at, link.citing_meta)
            self.store.put(self.NS, _key(citing_doc, target), acked.to_dict())
        return acked

    # -- outbox -----------------------------------------------------------

    def _enqueue(self, note: Notification) -> bool:
        box = self.store.find(self.OUTBOX, note.citing_doc) or []
        if any(n["target"] == note.target and n["new_version"] == note.new_version for n in box):
            return False
        box.append(note.to_dict())
        self.store.put(self.OUTBOX, note.citing_doc, box)
        return True

    def outbox(self, citing_doc: str) -> list[Notification]:
        return [Notification.from_dict(d) for d in self.store.find(self.OUTBOX, citing_doc) or []]

    def drain(self, citing_doc: str) -> list[Notification]:
        with self.store.transaction():
            notes = self.outbox(citing_doc)
            if notes:
                self.store.delete(self.OUTBOX, citing_doc)
        return notes

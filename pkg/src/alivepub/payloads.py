"""JSON payloads shared by the HTTP service and ``alive --json``.

Every payload carries ``"schema": "alive/1"`` and validates against the
matching file in ``alivepub/api/``.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .enrich import LinkStatus
from .ledger import UpdateStatus
from .model import AdminEntry, EnrichmentReport, MetaAttributes, RevisionRecord, VersionedName
from .notify import Backlink, Notification
from .render import RenderedReference

SCHEMA_VERSION = "alive/1"


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("alivepub.api").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(name: str, payload: dict) -> None:
    """Raise jsonschema.ValidationError if ``payload`` does not match ``name``."""
    jsonschema.validate(payload, load_schema(name))


def _env(**payload) -> dict:
    return {"schema": SCHEMA_VERSION, **payload}


def revision(pub_id: str, rev: RevisionRecord) -> dict:
    return _env(id=pub_id, name=str(VersionedName(pub_id, rev.version)), revision=rev.to_dict())


def resolve(pub_id: str, rev: RevisionRecord, meta: MetaAttributes, url, latest: RevisionRecord,
            notice=None) -> dict:
    out = _env(
        id=pub_id,
        name=str(VersionedName(pub_id, rev.version)),
        revision=rev.to_dict(),
        meta=meta.to_dict(),
        url=url,
        latest=str(VersionedName(pub_id, latest.version)),
        outdated=rev.version < latest.version,
        retracted=meta.retracted,
    )
    if notice:
        out["notice"] = notice
    return out


def history(pub_id: str, entries) -> dict:
    rows = []
    for e in entries:
        kind = "admin" if isinstance(e, AdminEntry) else "revision"
        rows.append({"entry": kind, **e.to_dict()})
    return _env(id=pub_id, entries=rows)


def update_status(status: UpdateStatus) -> dict:
    return _env(**status.to_dict())


def reference(pub_id: str, rendered: RenderedReference, report: EnrichmentReport) -> dict:
    return _env(id=pub_id, rendered=rendered.to_dict(), report=report.to_dict())


def cited_by(pub_id: str, refs) -> dict:
    return _env(id=pub_id, cited_by=[r.to_dict() for r in refs])


def backlink(link: Backlink) -> dict:
    return _env(backlink=link.to_dict())


def notifications(citing_doc: str, notes: list[Notification]) -> dict:
    return _env(citing_doc=citing_doc, notifications=[n.to_dict() for n in notes])


def click(list_id: str, pub_id: str, total: int, last_30_days: int) -> dict:
    return _env(list_id=list_id, id=pub_id, total=total, last_30_days=last_30_days)


def retracted(pub_id: str, flag: bool) -> dict:
    return _env(id=pub_id, retracted=flag)


def refresh_summary(summary) -> dict:
    return _env(**summary.to_dict())


def error(kind: str, message: str, **extra) -> dict:
    return _env(error={"type": kind, "message": message, **extra})


def document_refresh(path: str, result, written: bool) -> dict:
    return _env(path=path, changed=list(result.changed),
                unresolved={str(k): v for k, v in result.unresolved.items()}, written=written)


def link_report(path: str, rows: list[tuple[str, LinkStatus | None]]) -> dict:
    links = []
    for url, status in rows:
        if status is None:
            links.append({"url": url, "state": "invalid", "final_url": None, "http_code": None})
        else:
            links.append({"url": url, **status.to_dict()})
    return _env(path=path, links=links)

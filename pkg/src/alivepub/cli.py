"""``alive`` command line.

Works on a local store by default; ``--remote URL`` talks to a running
service instead.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import base64
import json
import re
import sys
from datetime import date
from pathlib import Path
from typing import Optional

import click
import httpx
import yaml

from . import payloads
from .config import Config, load_config
from .enrich import check_link
from .errors import AliveError, InvalidURL, NoOfficialVersion
from .marker import extract_meta, find_meta_block, refresh_document
from .model import Kind, MetaAttributes, ResolvePolicy, Style, Track, parse_instant, parse_versioned_name
from .service import create_app, registry_from_config
from .store import atomic_write

URL_RE = re.compile(r"https?://[^\s<>\"'\]\)]+")


class RemoteError(Exception):
    def __init__(self, status: int, payload: dict):
        err = payload.get("error", {}) if isinstance(payload, dict) else {}
        super().__init__(f"{status}: {err.get('message', 'request failed')}")
        self.status = status
        self.payload = payload


# -- backends: both return the same JSON payloads ------------------------------


class LocalBackend:
    def __init__(self, config: Config):
        self.registry = registry_from_config(config)

    def publish(self, pub_id, body: bytes, note, track, meta, url):
        rev = self.registry.publish(pub_id, body, note, Track(track), meta=meta, url=url)
        return payloads.revision(pub_id, rev)

    def resolve(self, name, policy):
        reg = self.registry
        vn = parse_versioned_name(name)
        rev = reg.ledger.resolve(vn, policy)
        try:
            latest = reg.ledger.latest(vn.base, policy)
        except NoOfficialVersion:
            latest = reg.ledger.latest(vn.base)
        meta = reg.ledger.meta(vn.base)
        notice = f"{vn.base} has been retracted" if meta.retracted else None
        return payloads.resolve(vn.base, rev, meta, reg.current_url(vn.base), latest, notice)

    def history(self, pub_id):
        return payloads.history(pub_id, self.registry.ledger.history(pub_id))

    def check_updates(self, name):
        return payloads.update_status(self.registry.ledger.check_for_updates(name))

    def promote(self, pub_id, version):
        return payloads.revision(pub_id, self.registry.ledger.promote(pub_id, version, self.registry.promotion))

    def retract(self, pub_id, reason):
        self.registry.ledger.retract(pub_id, reason)
        return payloads.retracted(pub_id, True)

    def render(self, pub_id, style, kinds, list_id):
        rendered, report = self.registry.render(pub_id, style, kinds, list_id)
        return payloads.reference(pub_id, rendered, report)

    def cited_by(self, pub_id, style):
        return payloads.cited_by(pub_id, self.registry.cited_by(pub_id, style))

    def cite(self, citing_doc, target, recorded):
        return payloads.backlink(self.registry.notifier.register_backlink(citing_doc, target, recorded))

    def ack(self, citing_doc, target):
        return payloads.backlink(self.registry.notifier.acknowledge(citing_doc, target))

    def notify(self, citing_doc):
        return payloads.notifications(citing_doc, self.registry.notifier.drain(citing_doc))

    def last_revision_date(self, pub_id) -> date:
        return self.registry.ledger.last_revision_date(pub_id)

    def close(self):
        self.registry.close()


class RemoteBackend:
    def __init__(self, base_url: str, token: Optional[str]):
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self.client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=30)

    def _call(self, method, path, ok=(200, 201), **kw):
        r = self.client.request(method, path, **kw)
        try:
            data = r.json()
        except ValueError:
            data = {}
        if r.status_code not in ok:
            raise RemoteError(r.status_code, data)
        return data

    def publish(self, pub_id, body: bytes, note, track, meta, url):
        req = {"body": base64.b64encode(body).decode("ascii"), "encoding": "base64", "note": note, "track": track}
        if meta is not None:
            req["meta"] = meta.to_dict()
        if url:
            req["url"] = url
        return self._call("POST", f"/publications/{pub_id}/revisions", json=req)

    def resolve(self, name, policy):
        return self._call("GET", f"/resolve/{name}", ok=(200, 410), params={"policy": policy.value})

    def history(self, pub_id):
        return self._call("GET", f"/history/{pub_id}")

    def check_updates(self, name):
        return self._call("GET", f"/check-updates/{name}")

    def promote(self, pub_id, version):
        return self._call("POST", f"/publications/{pub_id}/promote", json={"version": version})

    def retract(self, pub_id, reason):
        return self._call("POST", f"/publications/{pub_id}/retract", json={"reason": reason})

    def render(self, pub_id, style, kinds, list_id):
        params = {"style": style.value}
        if kinds is not None:
            params["kinds"] = ",".join(k.value for k in kinds)
        if list_id:
            params["list"] = list_id
        return self._call("GET", f"/ref/{pub_id}", params=params)

    def cited_by(self, pub_id, style):
        return self._call("GET", f"/cited-by/{pub_id}", params={"style": style.value})

    def cite(self, citing_doc, target, recorded):
        return self._call("POST", "/backlinks", json={
            "citing_doc": citing_doc, "target": target, "recorded_revision_date": recorded.isoformat()})

    def ack(self, citing_doc, target):
        return self._call("POST", "/backlinks/ack", json={"citing_doc": citing_doc, "target": target})

    def notify(self, citing_doc):
        return self._call("GET", f"/notifications/{citing_doc}")

    def last_revision_date(self, pub_id) -> date:
        entries = self.history(pub_id)["entries"]
        revs = [e for e in entries if e["entry"] == "revision"]
        if not revs:
            raise RemoteError(404, {"error": {"message": f"{pub_id} has no revisions"}})
        return parse_instant(revs[-1]["timestamp"]).date()

    def close(self):
        self.client.close()


# -- plumbing ------------------------------------------------------------------


class Ctx:
    def __init__(self, config: Config, remote: Optional[str], as_json: bool, token: Optional[str]):
        self.config = config
        self.remote = remote
        self.as_json = as_json
        self.token = token or config.token
        self._backend = None

    @property
    def backend(self):
        if self._backend is None:
            self._backend = RemoteBackend(self.remote, self.token) if self.remote else LocalBackend(self.config)
        return self._backend

    def emit(self, schema: str, payload: dict, human) -> None:
        if self.as_json:
            payloads.validate(schema, payload)
            click.echo(json.dumps(payload, ensure_ascii=False, indent=2))
        else:
            for line in human(payload):
                click.echo(line)


pass_ctx = click.make_pass_decorator(Ctx)


class AliveGroup(click.Group):
    """Maps domain errors to exit code 1, with the message on stderr."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (AliveError, RemoteError, httpx.HTTPError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(1)
        finally:
            obj = ctx.obj
            if isinstance(obj, Ctx) and obj._backend is not None:
                obj._backend.close()


@click.group(cls=AliveGroup)
@click.option("--store", type=click.Path(file_okay=False, path_type=Path), help="Record store directory.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, exists=True, path_type=Path),
              help="Config file (default: $ALIVE_CONFIG, then ./alive.yaml).")
@click.option("--remote", metavar="URL", help="Talk to a running service instead of a local store.")
@click.option("--token", envvar="ALIVE_TOKEN", help="Bearer token for --remote writes.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def cli(ctx, store, config_path, remote, token, as_json):
    """Maintain alive publications and living references."""
    config = load_config(config_path)
    if store is not None:
        config.store = store
    ctx.obj = Ctx(config, remote, as_json, token)


def _rev_line(name: str, rev: dict) -> str:
    note = f"  {rev['note']}" if rev.get("note") else ""
    return f"{name}  {rev['timestamp']}  {rev['track']}  {rev['hash_algorithm']}:{rev['content_hash'][:12]}{note}"


def _load_meta(path: Optional[Path], body: bytes) -> Optional[MetaAttributes]:
    if path is not None:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise click.BadParameter("meta file must hold a mapping", param_hint="--meta")
        return MetaAttributes.from_dict(data)
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError:
        return None
    if find_meta_block(text) is None:
        return None
    return extract_meta(text)


@cli.command()
@click.argument("pub_id")
@click.argument("file", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--note", default="", help="Change note for the history.")
@click.option("--track", type=click.Choice([t.value for t in Track]), default="official", show_default=True)
@click.option("--meta", "meta_path", type=click.Path(dir_okay=False, exists=True, path_type=Path),
              help="YAML/JSON meta-attributes (default: the document's own meta block).")
@click.option("--url", help="Current URL of the publication (remaps if changed).")
@pass_ctx
def publish(c: Ctx, pub_id, file, note, track, meta_path, url):
    """Publish FILE as the next revision of PUB_ID."""
    body = file.read_bytes()
    meta = _load_meta(meta_path, body)
    c.emit("revision_response", c.backend.publish(pub_id, body, note, track, meta, url),
           lambda p: [_rev_line(p["name"], p["revision"])])


@cli.command()
@click.argument("name")
@click.option("--official", is_flag=True, help="Resolve a bare name to the latest official revision.")
@pass_ctx
def resolve(c: Ctx, name, official):
    """Resolve NAME (id or idvN) to a revision."""
    policy = ResolvePolicy.LATEST_OFFICIAL if official else ResolvePolicy.LATEST_ANY

    def human(p):
        lines = [_rev_line(p["name"], p["revision"])]
        if p["meta"].get("title"):
            lines.append(f"  {p['meta']['title']}")
        if p["url"]:
            lines.append(f"  <{p['url']}>")
        if p["outdated"]:
            lines.append(f"  outdated: latest is {p['latest']}")
        if p.get("notice"):
            lines.append(f"  NOTICE: {p['notice']}")
        return lines

    c.emit("resolve_response", c.backend.resolve(name, policy), human)


@cli.command()
@click.argument("pub_id")
@pass_ctx
def history(c: Ctx, pub_id):
    """Show the protocol of changes."""

    def human(p):
        for e in p["entries"]:
            if e["entry"] == "revision":
                yield _rev_line(f"{p['id']}v{e['version']}", e)
            else:
                note = f"  {e['note']}" if e.get("note") else ""
                yield f"{e['timestamp']}  {e['action']} (v{e['version']}){note}"

    c.emit("history_response", c.backend.history(pub_id), human)


@cli.command("check-updates")
@click.argument("name")
@pass_ctx
def check_updates(c: Ctx, name):
    """Tell whether a newer version than NAME exists."""

    def human(p):
        if p["newer_exists"]:
            yield f"{p['queried']}: newer version {p['latest']} ({p['latest_timestamp']})"
        else:
            yield f"{p['queried']}: up to date"
        if p["retracted"]:
            yield "  NOTICE: publication has been retracted"

    c.emit("update_status_response", c.backend.check_updates(name), human)


@cli.command()
@click.argument("pub_id")
@click.argument("version", type=click.IntRange(min=1))
@pass_ctx
def promote(c: Ctx, pub_id, version):
    """Make an author-track VERSION official."""
    c.emit("revision_response", c.backend.promote(pub_id, version),
           lambda p: [f"promoted {_rev_line(p['name'], p['revision'])}"])


@cli.command()
@click.argument("pub_id")
@click.option("--reason", required=True)
@pass_ctx
def retract(c: Ctx, pub_id, reason):
    """Flag PUB_ID as retracted (content stays available)."""
    c.emit("retract_response", c.backend.retract(pub_id, reason), lambda p: [f"{p['id']} retracted"])


def _kinds(value: Optional[str]):
    if value is None:
        return None
    try:
        return [Kind(k.strip()) for k in value.split(",") if k.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"{exc}; choose from {', '.join(k.value for k in Kind)}", param_hint="--kinds")


@cli.command()
@click.argument("pub_id")
@click.option("--style", type=click.Choice([s.value for s in Style]), default="vancouver", show_default=True)
@click.option("--kinds", help="Comma-separated living fields (default: all).")
@click.option("--list", "list_id", help="Reference list id, for click counts.")
@click.option("--markup", is_flag=True, help="Print the markup fragment instead of plain text.")
@pass_ctx
def render(c: Ctx, pub_id, style, kinds, list_id, markup):
    """Render a living reference to PUB_ID."""
    payload = c.backend.render(pub_id, Style(style), _kinds(kinds), list_id)
    c.emit("reference_response", payload,
           lambda p: [p["rendered"]["markup_fragment" if markup else "plain_text"]])


@cli.command("cited-by")
@click.argument("pub_id")
@click.option("--style", type=click.Choice([s.value for s in Style]), default="vancouver", show_default=True)
@pass_ctx
def cited_by(c: Ctx, pub_id, style):
    """List documents citing PUB_ID, newest first."""
    c.emit("cited_by_response", c.backend.cited_by(pub_id, Style(style)),
           lambda p: [r["plain_text"] for r in p["cited_by"]])


@cli.command()
@click.argument("doc_file", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--dry-run", is_flag=True, help="Report changes without writing.")
@pass_ctx
def refresh(c: Ctx, doc_file, dry_run):
    """Update every bound ≈date≈ marker in DOC_FILE."""
    # bytes in, bytes out: no newline translation
    text = doc_file.read_bytes().decode("utf-8")
    result = refresh_document(text, c.backend.last_revision_date)
    written = bool(result.changed) and not dry_run
    if written:
        atomic_write(doc_file, result.text.encode("utf-8"))

    def human(p):
        if p["changed"]:
            verb = "updated" if p["written"] else "would update"
            yield f"{p['path']}: {verb} markers {', '.join(map(str, p['changed']))}"
        else:
            yield f"{p['path']}: up to date"
        for idx, reason in sorted(p["unresolved"].items(), key=lambda kv: int(kv[0])):
            yield f"  marker {idx} unchanged: {reason}"

    c.emit("document_refresh_response", payloads.document_refresh(str(doc_file), result, written), human)


@cli.command("check-links")
@click.argument("doc_file", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--timeout", type=float, default=10.0, show_default=True, help="Seconds per link.")
@pass_ctx
def check_links(c: Ctx, doc_file, timeout):
    """Check every http(s) link in DOC_FILE."""
    text = doc_file.read_text(encoding="utf-8")
    urls = list(dict.fromkeys(u.rstrip(".,;") for u in URL_RE.findall(text)))
    rows = []
    with httpx.Client() as client:
        for url in urls:
            try:
                rows.append((url, check_link(url, client, timeout=timeout)))
            except InvalidURL:
                rows.append((url, None))

    def human(p):
        width = max((len(l["state"]) for l in p["links"]), default=0)
        for l in p["links"]:
            code = l["http_code"] if l["http_code"] is not None else "-"
            extra = f" -> {l['final_url']}" if l["state"] == "redirect" else ""
            yield f"{l['state']:<{width}}  {code:>3}  {l['url']}{extra}"

    c.emit("link_report_response", payloads.link_report(str(doc_file), rows), human)


@cli.command()
@click.argument("citing_doc")
@click.argument("target")
@click.argument("recorded", type=click.DateTime(formats=["%Y-%m-%d"]))
@pass_ctx
def cite(c: Ctx, citing_doc, target, recorded):
    """Register that CITING_DOC cites TARGET as of RECORDED (YYYY-MM-DD)."""
    c.emit("backlink_response", c.backend.cite(citing_doc, target, recorded.date()), _backlink_lines)


@cli.command()
@click.argument("citing_doc")
@click.argument("target")
@pass_ctx
def ack(c: Ctx, citing_doc, target):
    """Acknowledge TARGET's latest revision in CITING_DOC."""
    c.emit("backlink_response", c.backend.ack(citing_doc, target), _backlink_lines)


def _backlink_lines(p):
    b = p["backlink"]
    state = "possibly outdated" if b["stale"] else "current"
    return [f"{b['citing_doc']} -> {b['target']} as of {b['recorded_revision_date']}: {state}"]


@cli.command()
@click.argument("citing_doc")
@pass_ctx
def notify(c: Ctx, citing_doc):
    """Drain CITING_DOC's notification outbox."""

    def human(p):
        if not p["notifications"]:
            yield "no notifications"
        for n in p["notifications"]:
            yield f"{n['target']} revised to v{n['new_version']} on {n['new_date']}: reference possibly outdated"

    c.emit("notifications_response", c.backend.notify(citing_doc), human)


@cli.command()
@click.option("--bind", help="host:port (default from config or $ALIVE_BIND).")
@pass_ctx
def serve(c: Ctx, bind):
    """Run the HTTP service on the local store."""
    import uvicorn

    if bind:
        c.config.bind = bind
    registry = registry_from_config(c.config)
    uvicorn.run(create_app(registry, c.config), host=c.config.host, port=c.config.port)


def main(argv=None) -> None:
    cli.main(args=argv, prog_name="alive")


if __name__ == "__main__":
    sys.exit(main())

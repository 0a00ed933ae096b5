"""HTTP service (FastAPI).

Read endpoints are open; mutating endpoints need ``Authorization: Bearer
<token>``.  Acknowledging a stale reference also accepts the citing
document's own token from ``doc_tokens``.  Every JSON response carries
``"schema": "alive/1"``.

Run with ``alive serve`` or ``uvicorn --factory alivepub.service:app_from_env``.
"""

from __future__ import annotations

import base64
import binascii
import hmac
import logging
import threading
from contextlib import asynccontextmanager
from datetime import date
from typing import Any, Optional

import jsonschema
from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse

from . import payloads
from .config import Config, load_config
from .enrich import LinkCheckProvider, provider_from_config
from .errors import (
    AliveError,
    InvalidState,
    NoOfficialVersion,
    NotFound,
    RateLimited,
    UnknownPublication,
)
from .model import Kind, MetaAttributes, ResolvePolicy, Style, Track, parse_instant, parse_versioned_name
from .registry import Registry

logger = logging.getLogger(__name__)

OUTDATED_HEADER = "X-Alive-Outdated"


class ApiError(Exception):
    def __init__(self, status: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.status, self.kind, self.extra = status, kind, extra


class NightlyScheduler:
    """Runs ``registry.run_nightly_refresh`` once a day on a daemon thread."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self.last_summary = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="alive-nightly", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _loop(self) -> None:
        policy = self.registry.refresh_policy
        while not self._stop.is_set():
            now = self.registry.clock()
            wait = (policy.next_run(now) - now).total_seconds()
            if self._stop.wait(max(wait, 0)):
                return
            try:
                self.last_summary = self.registry.run_nightly_refresh()
                logger.info("nightly refresh: %s", self.last_summary.to_dict())
            except Exception:
                logger.exception("nightly refresh failed")


def _name(text: str):
    try:
        return parse_versioned_name(text)
    except ValueError as exc:
        raise ApiError(400, "bad_request", str(exc)) from None


def _enum(cls, value, what):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ApiError(400, "bad_request", f"unknown {what} {value!r} (expected one of {allowed})") from None


def _body(schema: str, payload: Any) -> dict:
    try:
        jsonschema.validate(payload, payloads.load_schema(schema))
    except jsonschema.ValidationError as exc:
        raise ApiError(400, "bad_request", exc.message) from None
    return payload


def _instant(text: Optional[str]):
    return parse_instant(text) if text else None


def create_app(registry: Registry, config: Optional[Config] = None, *, scheduler: Optional[bool] = None) -> FastAPI:
    """Build the app around an open registry.

    The nightly scheduler starts with the app when the refresh policy is
    nightly, unless ``scheduler=False``.
    """
    config = config or Config()
    run_scheduler = registry.refresh_policy.mode == "nightly" if scheduler is None else scheduler
    sched = NightlyScheduler(registry)

    @asynccontextmanager
    async def lifespan(app):
        if run_scheduler:
            sched.start()
        try:
            yield
        finally:
            sched.stop()

    app = FastAPI(title="alive publications", version=payloads.SCHEMA_VERSION, lifespan=lifespan)
    app.state.registry = registry
    app.state.scheduler = sched

    def respond(payload: dict, status: int = 200, headers: Optional[dict] = None) -> JSONResponse:
        return JSONResponse(payload, status_code=status, headers=headers)

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return respond(payloads.error(exc.kind, str(exc), **exc.extra), exc.status)

    @app.exception_handler(AliveError)
    async def _domain_error(request: Request, exc: AliveError):
        if isinstance(exc, NotFound):
            return respond(payloads.error("not_found", str(exc)), 404)
        if isinstance(exc, RateLimited):
            return respond(payloads.error("rate_limited", str(exc), next_allowed=exc.next_allowed.isoformat()), 429)
        if isinstance(exc, InvalidState):
            return respond(payloads.error("conflict", str(exc)), 409)
        return respond(payloads.error("bad_request", str(exc)), 400)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return respond(payloads.error("bad_request", str(exc)), 400)

    def require_admin(authorization: Optional[str]) -> None:
        if not _token_ok(authorization, config.token):
            raise ApiError(401, "unauthorized", "missing or wrong bearer token")

    # -- reads ------------------------------------------------------------

    @app.get("/resolve/{name:path}")
    def resolve(name: str, policy: str = "latest_any"):
        vn = _name(name)
        pol = _enum(ResolvePolicy, policy, "policy")
        rev = registry.ledger.resolve(vn, pol)
        try:
            latest = registry.ledger.latest(vn.base, pol)
        except NoOfficialVersion:
            latest = registry.ledger.latest(vn.base)
        meta = registry.ledger.meta(vn.base)
        headers = {}
        if rev.version < latest.version:
            headers[OUTDATED_HEADER] = str(vn.pinned(latest.version))
        if meta.retracted:
            notice = f"{vn.base} has been retracted"
            return respond(payloads.resolve(vn.base, rev, meta, registry.current_url(vn.base), latest, notice),
                           410, headers)
        registry.usage.record_visit(vn.base)
        return respond(payloads.resolve(vn.base, rev, meta, registry.current_url(vn.base), latest), 200, headers)

    @app.get("/ref/{pub_id:path}")
    def ref(pub_id: str, style: str = "vancouver", kinds: Optional[str] = None, list: Optional[str] = None):
        st = _enum(Style, style, "style")
        selected = None
        if kinds is not None:
            selected = [_enum(Kind, k.strip(), "kind") for k in kinds.split(",") if k.strip()]
        rendered, report = registry.render(pub_id, st, selected, list_id=list)
        return respond(payloads.reference(pub_id, rendered, report))

    @app.get("/history/{pub_id:path}")
    def history(pub_id: str):
        return respond(payloads.history(pub_id, registry.ledger.history(pub_id)))

    @app.get("/check-updates/{name:path}")
    def check_updates(name: str, policy: str = "latest_official"):
        status = registry.ledger.check_for_updates(_name(name), _enum(ResolvePolicy, policy, "policy"))
        return respond(payloads.update_status(status))

    @app.get("/cited-by/{pub_id:path}")
    def cited_by(pub_id: str, style: str = "vancouver"):
        return respond(payloads.cited_by(pub_id, registry.cited_by(pub_id, _enum(Style, style, "style"))))

    @app.get("/notifications/{citing_doc:path}")
    def notifications(citing_doc: str, authorization: Optional[str] = Header(None)):
        if not (_token_ok(authorization, config.token) or
                _token_ok(authorization, config.doc_tokens.get(citing_doc))):
            raise ApiError(401, "unauthorized", "missing or wrong bearer token")
        return respond(payloads.notifications(citing_doc, registry.notifier.drain(citing_doc)))

    # -- writes -----------------------------------------------------------

    @app.post("/publications/{pub_id:path}/revisions")
    def publish(pub_id: str, payload: Any = Body(None), authorization: Optional[str] = Header(None)):
        require_admin(authorization)
        req = _body("publish_request", payload)
        if req.get("encoding") == "base64":
            try:
                body = base64.b64decode(req["body"], validate=True)
            except binascii.Error:
                raise ApiError(400, "bad_request", "body is not valid base64") from None
        else:
            body = req["body"].encode("utf-8")
        meta = MetaAttributes.from_dict(req["meta"]) if "meta" in req else None
        rev = registry.publish(pub_id, body, req.get("note", ""), Track(req.get("track", "official")),
                               _instant(req.get("at")), meta, req.get("url"))
        return respond(payloads.revision(pub_id, rev), 201)

    @app.post("/publications/{pub_id:path}/promote")
    def promote(pub_id: str, payload: Any = Body(None), authorization: Optional[str] = Header(None)):
        require_admin(authorization)
        req = _body("promote_request", payload)
        rev = registry.ledger.promote(pub_id, req["version"], registry.promotion, _instant(req.get("at")))
        return respond(payloads.revision(pub_id, rev))

    @app.post("/publications/{pub_id:path}/retract")
    def retract(pub_id: str, payload: Any = Body(None), authorization: Optional[str] = Header(None)):
        require_admin(authorization)
        req = _body("retract_request", payload)
        registry.ledger.retract(pub_id, req["reason"], _instant(req.get("at")))
        return respond(payloads.retracted(pub_id, True))

    @app.post("/backlinks")
    def register_backlink(payload: Any = Body(None), authorization: Optional[str] = Header(None)):
        req = _body("backlink_request", payload)
        if not (_token_ok(authorization, config.token) or
                _token_ok(authorization, config.doc_tokens.get(req["citing_doc"]))):
            raise ApiError(401, "unauthorized", "missing or wrong bearer token")
        meta = MetaAttributes.from_dict(req["citing_meta"]) if req.get("citing_meta") else None
        link = registry.notifier.register_backlink(
            req["citing_doc"], req["target"], date.fromisoformat(req["recorded_revision_date"]), meta)
        return respond(payloads.backlink(link), 201)

    @app.post("/backlinks/ack")
    def acknowledge(payload: Any = Body(None), authorization: Optional[str] = Header(None)):
        req = _body("ack_request", payload)
        if not (_token_ok(authorization, config.token) or
                _token_ok(authorization, config.doc_tokens.get(req["citing_doc"]))):
            raise ApiError(401, "unauthorized", "missing or wrong bearer token")
        link = registry.notifier.acknowledge(req["citing_doc"], req["target"], _instant(req.get("at")))
        return respond(payloads.backlink(link))

    @app.post("/click/{list_id}/{pub_id:path}")
    def click(list_id: str, pub_id: str):
        if not registry.ledger.exists(pub_id):
            raise UnknownPublication(f"unknown publication {pub_id!r}")
        registry.usage.record_click(list_id, pub_id)
        total, recent = registry.usage.clicks(list_id, pub_id)
        return respond(payloads.click(list_id, pub_id, total, recent))

    @app.post("/admin/refresh")
    def refresh_now(authorization: Optional[str] = Header(None)):
        require_admin(authorization)
        return respond(payloads.refresh_summary(registry.run_nightly_refresh()))

    return app


def _token_ok(header: Optional[str], expected: Optional[str]) -> bool:
    if not expected or not header or not header.startswith("Bearer "):
        return False
    return hmac.compare_digest(header[len("Bearer "):].encode(), expected.encode())


def registry_from_config(config: Config) -> Registry:
    providers = [provider_from_config(p) for p in config.providers]
    if config.link_check:
        providers.insert(0, LinkCheckProvider(timeout=5.0))
    return Registry.open(config.store, config.mirror, providers=providers,
                         promotion=config.promotion, refresh=config.refresh)


def app_from_env() -> FastAPI:
    """Factory for ``uvicorn --factory``; reads the config the usual way."""
    config = load_config()
    return create_app(registry_from_config(config), config)

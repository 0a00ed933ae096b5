"""Living attributes of a bibliographic reference.

Providers answer questions about a publication (is the link alive, how
often is it cited, is it open access...).  The :class:`Enricher` fans the
questions out concurrently, each call under its provider's time budget, and
assembles an :class:`EnrichmentReport`.  A failed provider leaves its kind
out of the report; nothing is ever filled in by guesswork.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence
from urllib.parse import quote, urljoin

import httpx

from .errors import AliveError, InvalidPolicy, InvalidURL, NotFound, ProviderFailure
from .model import (
    ALL_KINDS,
    EnrichmentEntry,
    EnrichmentReport,
    Kind,
    LivingReference,
    MetaAttributes,
    format_instant,
    parse_instant,
    utcnow,
)
from .store import RecordStore, UsageCounters, check_url

logger = logging.getLogger(__name__)

DEFAULT_TTL = timedelta(hours=24)
RECENT_REVIEW_DAYS = 180
MODES = ("on_the_fly", "cached", "cache_only")


# -- value types ----------------------------------------------------------------


@dataclass(frozen=True)
class LinkStatus:
    state: str  # ok | redirect | broken | timeout
    final_url: Optional[str] = None
    http_code: Optional[int] = None

    def __post_init__(self):
        if self.state not in ("ok", "redirect", "broken", "timeout"):
            raise ValueError(f"unknown link state {self.state!r}")
        if self.state == "redirect" and not self.final_url:
            raise ValueError("redirect needs a final_url")
        if self.state in ("broken", "timeout") and self.final_url is not None:
            raise ValueError(f"{self.state} link cannot carry a final_url")

    def to_dict(self) -> dict:
        return {"state": self.state, "final_url": self.final_url, "http_code": self.http_code}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinkStatus":
        return cls(d["state"], d.get("final_url"), d.get("http_code"))


@dataclass(frozen=True)
class AccessMode:
    mode: str  # open | embargoed | closed | unknown
    checked_at: datetime
    embargo_until: Optional[date] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "checked_at": format_instant(self.checked_at),
            "embargo_until": self.embargo_until.isoformat() if self.embargo_until else None,
        }


@dataclass(frozen=True)
class VisitCounts:
    total: int
    last_30_days: int

    def __post_init__(self):
        if not 0 <= self.last_30_days <= self.total:
            raise ValueError("need 0 <= last_30_days <= total")

    def to_dict(self) -> dict:
        return {"total": self.total, "last_30_days": self.last_30_days}


@dataclass(frozen=True)
class Target:
    """What a provider gets to know about the publication it is asked about."""

    id: str
    url: Optional[str] = None
    meta: Optional[MetaAttributes] = None
    list_id: Optional[str] = None


# -- link checking ---------------------------------------------------------------


def check_link(url: str, client: Optional[httpx.Client] = None, timeout: float = 10.0,
               max_redirects: int = 10) -> LinkStatus:
    """Classify a hyperlink: 2xx ok, 3xx chain to a 2xx redirect, else broken.

    ``timeout`` bounds the whole check including redirects.
    """
    check_url(url)
    own = client is None
    if own:
        client = httpx.Client()
    deadline = time.monotonic() + timeout
    current, first_code, hops = url, None, 0
    try:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return LinkStatus("timeout")
            try:
                with client.stream("GET", current, follow_redirects=False,
                                   timeout=httpx.Timeout(remaining)) as resp:
                    code = resp.status_code
                    location = resp.headers.get("location")
            except httpx.TimeoutException:
                return LinkStatus("timeout")
            except httpx.HTTPError as exc:
                logger.info("link %s unreachable: %s", current, exc)
                return LinkStatus("broken")
            if first_code is None:
                first_code = code
            if 200 <= code < 300:
                if hops == 0:
                    return LinkStatus("ok", None, code)
                return LinkStatus("redirect", current, first_code)
            if 300 <= code < 400 and location and hops < max_redirects:
                hops += 1
                current = urljoin(current, location)
                continue
            return LinkStatus("broken", None, code)
    finally:
        if own:
            client.close()


# -- providers ---------------------------------------------------------------------


class Provider:
    """Answers enrichment questions for the kinds it declares.

    ``fetch`` returns a kind-specific value or raises ProviderFailure.
    ``local`` providers read this registry's own store and make no outbound
    request.
    """

    local = False

    def __init__(self, name: str, kinds: Iterable[Kind], timeout: float = 5.0, max_in_flight: int = 4):
        self.name = name
        self.kinds = frozenset(Kind(k) for k in kinds)
        self.timeout = timeout
        self.calls = 0
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._count_lock = threading.Lock()

    def __call__(self, kind: Kind, target: Target) -> Any:
        if not self._slots.acquire(timeout=self.timeout):
            raise ProviderFailure(self.name, "too many requests in flight")
        try:
            with self._count_lock:
                self.calls += 1
            return self.fetch(kind, target)
        finally:
            self._slots.release()

    def fetch(self, kind: Kind, target: Target) -> Any:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class FixtureProvider(Provider):
    """Answers from in-memory tables; ``down`` and ``delay`` inject faults.

    ``answers[kind]`` is a mapping of publication id to value or a callable
    taking the Target.  A missing id answers None.
    """

    def __init__(self, name: str, answers: Mapping[Kind, Any], timeout: float = 1.0,
                 down: bool = False, delay: float = 0.0):
        super().__init__(name, answers.keys(), timeout)
        self.answers = {Kind(k): v for k, v in answers.items()}
        self.down = down
        self.delay = delay

    def fetch(self, kind, target):
        if self.delay:
            time.sleep(self.delay)
        if self.down:
            raise ProviderFailure(self.name, "service unavailable")
        table = self.answers[kind]
        if callable(table):
            return table(target)
        return table.get(target.id)


class CitationIndexProvider(Provider):
    """Counts citing documents in a list of (citing, cited) edges."""

    def __init__(self, name: str, edges: Iterable[tuple[str, str]], timeout: float = 1.0):
        super().__init__(name, [Kind.CITATION_COUNT], timeout)
        self.edges = list(edges)
        self.down = False

    def fetch(self, kind, target):
        if self.down:
            raise ProviderFailure(self.name, "service unavailable")
        return len({src for src, dst in self.edges if dst == target.id})


class LinkCheckProvider(Provider):
    def __init__(self, name: str = "link-checker", client: Optional[httpx.Client] = None,
                 timeout: float = 10.0):
        super().__init__(name, [Kind.LINK_STATUS], timeout)
        self.client = client

    def fetch(self, kind, target):
        if not target.url:
            raise ProviderFailure(self.name, "reference has no URL")
        try:
            # leave a little of the budget for the executor handoff
            return check_link(target.url, self.client, timeout=self.timeout * 0.9).to_dict()
        except InvalidURL as exc:
            raise ProviderFailure(self.name, str(exc)) from None


class HttpProvider(Provider):
    """Generic JSON provider: ``GET <base_url>/<kind>/<id>`` → ``{"value": ...}``.

    ETag validators are remembered and sent back as If-None-Match; a 304
    reuses the previous value.  404 means "no data" (None).
    """

    def __init__(self, name: str, kinds: Iterable[Kind], base_url: str, timeout: float = 5.0,
                 client: Optional[httpx.Client] = None):
        super().__init__(name, kinds, timeout)
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client()
        self._validators: dict[str, tuple[str, Any]] = {}

    def fetch(self, kind, target):
        url = f"{self.base_url}/{kind.value}/{quote(target.id, safe='')}"
        params = {"list": target.list_id} if target.list_id else None
        headers = {}
        if url in self._validators:
            headers["If-None-Match"] = self._validators[url][0]
        try:
            resp = self.client.get(url, params=params, headers=headers, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise ProviderFailure(self.name, str(exc)) from None
        if resp.status_code == 304 and url in self._validators:
            return self._validators[url][1]
        if resp.status_code == 404:
            return None
        if resp.status_code != 200:
            raise ProviderFailure(self.name, f"HTTP {resp.status_code}")
        try:
            value = resp.json()["value"]
        except (ValueError, KeyError, TypeError):
            raise ProviderFailure(self.name, "malformed response") from None
        if "etag" in resp.headers:
            self._validators[url] = (resp.headers["etag"], value)
        return value


class LedgerProvider(Provider):
    """Retraction flags and translation relations from the local ledger."""

    local = True

    def __init__(self, ledger, name: str = "registry"):
        super().__init__(name, [Kind.RETRACTION, Kind.TRANSLATIONS], timeout=5.0, max_in_flight=64)
        self.ledger = ledger

    def fetch(self, kind, target):
        try:
            meta = self.ledger.meta(target.id)
        except NotFound:
            raise ProviderFailure(self.name, f"{target.id} not registered") from None
        if kind == Kind.RETRACTION:
            return meta.retracted
        return list(meta.translations)


class UsageProvider(Provider):
    """Visit and click counters recorded by this service."""

    local = True

    def __init__(self, usage: UsageCounters, name: str = "usage", clock: Callable[[], datetime] = utcnow):
        super().__init__(name, [Kind.VISIT_COUNTS, Kind.CLICK_COUNT], timeout=5.0, max_in_flight=64)
        self.usage = usage
        self.clock = clock

    def fetch(self, kind, target):
        if kind == Kind.VISIT_COUNTS:
            return fetch_visit_counts(target.id, self.usage, self.clock()).to_dict()
        if not target.list_id:
            raise ProviderFailure(self.name, "click counts need a reference list id")
        return fetch_click_count(target.list_id, target.id, self.usage, self.clock())


def provider_from_config(entry: Mapping) -> Provider:
    """Build an HTTP provider from ``{name, kinds, base_url, timeout_ms}``."""
    try:
        kinds = [Kind(k) for k in entry["kinds"]]
        return HttpProvider(entry["name"], kinds, entry["base_url"], entry.get("timeout_ms", 5000) / 1000)
    except (KeyError, ValueError) as exc:
        raise InvalidPolicy(f"bad provider entry {entry!r}: {exc}") from None


# -- single-attribute operations ----------------------------------------------------


def _ask(provider: Provider, kind: Kind, target: Target) -> Any:
    """Call a provider and enforce its time budget."""
    if provider.local:
        return provider(kind, target)
    box: dict = {}

    def run():
        try:
            box["value"] = provider(kind, target)
        except BaseException as exc:  # noqa: BLE001 - re-raised in caller thread
            box["error"] = exc

    worker = threading.Thread(target=run, daemon=True)
    worker.start()
    worker.join(provider.timeout)
    if worker.is_alive():
        raise ProviderFailure(provider.name, "timed out")
    if "error" in box:
        err = box["error"]
        if isinstance(err, ProviderFailure):
            raise err
        raise ProviderFailure(provider.name, f"{type(err).__name__}: {err}")
    return box["value"]


def discover_link(citation: MetaAttributes, provider: Optional[Provider], pub_id: str = "") -> Optional[str]:
    """Find a URL for a citation through a lookup service; never invents one."""
    if citation.url:
        return citation.url
    if not ((citation.title and citation.authors) or citation.doi or pub_id):
        raise ValueError("citation needs a title and an author, or an identifier")
    if provider is None:
        return None
    try:
        url = _ask(provider, Kind.DISCOVERED_LINK, Target(pub_id or citation.doi or "", None, citation))
    except ProviderFailure as exc:
        logger.warning("link discovery failed: %s", exc)
        return None
    if url is None:
        return None
    try:
        return check_url(url)
    except InvalidURL:
        logger.warning("link discovery returned a non-URL %r", url)
        return None


def check_retraction(pub_id: str, ledger=None, provider: Optional[Provider] = None) -> bool:
    """True iff the registry or the provider marks the publication retracted.

    Raises ProviderFailure when neither can answer.
    """
    local = None
    if ledger is not None:
        try:
            local = ledger.meta(pub_id).retracted
        except NotFound:
            local = None
    if local:
        return True
    if provider is not None:
        try:
            return bool(_ask(provider, Kind.RETRACTION, Target(pub_id)))
        except ProviderFailure:
            if local is None:
                raise
            return local
    if local is None:
        raise ProviderFailure("registry", f"nothing known about {pub_id}")
    return local


def _access_mode(answer: Any, now: datetime) -> AccessMode:
    if not isinstance(answer, Mapping) or answer.get("mode") not in ("open", "embargoed", "closed"):
        raise ValueError(f"bad open-access answer {answer!r}")
    until = answer.get("embargo_until")
    until = date.fromisoformat(until) if until else None
    mode = answer["mode"]
    if mode == "embargoed" and until is not None and until <= now.date():
        mode = "open"
    return AccessMode(mode, now, until if mode == "embargoed" else None)


def check_open_access(pub_id: str, provider: Optional[Provider], now: Optional[datetime] = None) -> AccessMode:
    now = now or utcnow()
    if provider is None:
        return AccessMode("unknown", now)
    try:
        return _access_mode(_ask(provider, Kind.OPEN_ACCESS, Target(pub_id)), now)
    except (ProviderFailure, ValueError) as exc:
        logger.warning("open-access check for %s failed: %s", pub_id, exc)
        return AccessMode("unknown", now)


def _count(value: Any, provider: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ProviderFailure(provider, f"not a count: {value!r}")
    return value


def fetch_citation_count(pub_id: str, provider: Provider) -> int:
    if Kind.CITATION_COUNT not in provider.kinds:
        raise ValueError(f"{provider.name} does not serve citation counts")
    return _count(_ask(provider, Kind.CITATION_COUNT, Target(pub_id)), provider.name)


def fetch_visit_counts(pub_id: str, usage: UsageCounters, now: Optional[datetime] = None) -> VisitCounts:
    total, recent = usage.visits(pub_id, now)
    return VisitCounts(total, recent)


def fetch_click_count(list_id: str, pub_id: str, usage: UsageCounters, now: Optional[datetime] = None) -> int:
    return usage.clicks(list_id, pub_id, now)[0]


def fetch_bookmark_count(pub_id: str, providers: Sequence[Provider]) -> int:
    """Sum of the bookmark counts from every provider that answered."""
    answers = []
    for p in providers:
        try:
            answers.append(_count(_ask(p, Kind.BOOKMARK_COUNT, Target(pub_id)), p.name))
        except ProviderFailure as exc:
            logger.warning("bookmark count failed: %s", exc)
    if providers and not answers:
        raise ProviderFailure("bookmarks", "no bookmark provider answered")
    return sum(answers)


def check_translations(pub_id: str, meta: Optional[MetaAttributes] = None,
                       providers: Sequence[Provider] = ()) -> list[str]:
    found: list[str] = list(meta.translations) if meta else []
    for p in providers:
        try:
            found += list(_ask(p, Kind.TRANSLATIONS, Target(pub_id, meta=meta)) or [])
        except ProviderFailure as exc:
            logger.warning("translation lookup failed: %s", exc)
    return list(dict.fromkeys(found))


def _review_dates(answer: Any) -> list[date]:
    if answer is None:
        return []
    return [d if isinstance(d, date) else date.fromisoformat(d) for d in answer]


def is_recent(reviews: Iterable[date], today: date, window_days: int = RECENT_REVIEW_DAYS) -> bool:
    return any(0 <= (today - d).days <= window_days for d in reviews)


def check_recent_review(pub_id: str, provider: Optional[Provider], window_days: int = RECENT_REVIEW_DAYS,
                        now: Optional[datetime] = None) -> bool:
    """True iff some review of the publication is at most ``window_days`` old."""
    now = now or utcnow()
    if provider is None:
        return False
    try:
        dates = _review_dates(_ask(provider, Kind.RECENT_REVIEW, Target(pub_id)))
    except (ProviderFailure, ValueError, TypeError) as exc:
        logger.warning("review lookup failed: %s", exc)
        return False
    return is_recent(dates, now.date(), window_days)


# -- policy and cache ---------------------------------------------------------------


@dataclass(frozen=True)
class EnrichmentPolicy:
    """Which kinds to fetch and how fresh they must be.

    ``cached`` serves entries younger than their TTL and refetches the rest;
    ``cache_only`` never calls a remote provider.
    """

    kinds: frozenset = frozenset(ALL_KINDS)
    mode: str = "on_the_fly"
    ttl: timedelta = DEFAULT_TTL
    ttl_overrides: Mapping[Kind, timedelta] = field(default_factory=dict)
    review_window_days: int = RECENT_REVIEW_DAYS

    def __post_init__(self):
        try:
            object.__setattr__(self, "kinds", frozenset(Kind(k) for k in self.kinds))
            object.__setattr__(self, "ttl_overrides", {Kind(k): v for k, v in self.ttl_overrides.items()})
        except ValueError as exc:
            raise InvalidPolicy(str(exc)) from None
        if self.mode not in MODES:
            raise InvalidPolicy(f"unknown freshness mode {self.mode!r}")
        if self.ttl < timedelta(0) or any(v < timedelta(0) for v in self.ttl_overrides.values()):
            raise InvalidPolicy("TTL must not be negative")
        if self.review_window_days < 0:
            raise InvalidPolicy("review window must not be negative")

    def ttl_for(self, kind: Kind) -> timedelta:
        return self.ttl_overrides.get(kind, self.ttl)


class EnrichmentCache:
    """Last good entry per (publication, kind, list); optionally persisted."""

    NS = "cache"

    def __init__(self, store: Optional[RecordStore] = None):
        self.store = store
        self._lock = threading.Lock()
        self._entries: dict[str, EnrichmentEntry] = {}
        if store is not None:
            for key, d in store.list(self.NS).items():
                self._entries[key] = EnrichmentEntry.from_dict(d)

    @staticmethod
    def key(pub_id: str, kind: Kind, list_id: Optional[str] = None) -> str:
        return f"{pub_id}|{kind.value}|{list_id or ''}"

    def get(self, key: str) -> Optional[EnrichmentEntry]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, entry: EnrichmentEntry) -> None:
        with self._lock:
            self._entries[key] = entry
        if self.store is not None:
            self.store.put(self.NS, key, entry.to_dict())

    def __len__(self):
        return len(self._entries)


# -- the enricher ---------------------------------------------------------------------


@dataclass
class EnrichmentOutcome:
    report: EnrichmentReport
    failures: dict[Kind, str]
    refreshed: set[Kind]


class Enricher:
    """Runs the providers for the requested kinds and assembles the report.

    ``describe`` maps a publication id to a Target (URL, meta); without it
    only the id is known.
    """

    def __init__(self, providers: Sequence[Provider] = (), *, cache: Optional[EnrichmentCache] = None,
                 clock: Callable[[], datetime] = utcnow,
                 describe: Optional[Callable[[str], Target]] = None, max_workers: int = 16):
        self.providers = list(providers)
        self.cache = cache if cache is not None else EnrichmentCache()
        self.clock = clock
        self.describe = describe
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="enrich")

    def close(self):
        self._pool.shutdown(wait=False, cancel_futures=True)

    def providers_for(self, kind: Kind) -> list[Provider]:
        return [p for p in self.providers if kind in p.kinds]

    def outbound_calls(self) -> int:
        return sum(p.calls for p in self.providers if not p.local)

    def _target(self, ref: LivingReference) -> Target:
        base = self.describe(ref.target) if self.describe else Target(ref.target)
        return Target(base.id, base.url, base.meta, ref.list_id)

    def enrich(self, reference: LivingReference, policy: EnrichmentPolicy = EnrichmentPolicy()) -> EnrichmentReport:
        return self.enrich_detailed(reference, policy).report

    def enrich_detailed(self, reference: LivingReference,
                        policy: EnrichmentPolicy = EnrichmentPolicy()) -> EnrichmentOutcome:
        if not isinstance(policy, EnrichmentPolicy):
            raise InvalidPolicy(f"not an enrichment policy: {policy!r}")
        now = self.clock()
        target = self._target(reference)
        entries: dict[Kind, EnrichmentEntry] = {}
        failures: dict[Kind, str] = {}
        refreshed: set[Kind] = set()
        pending: dict[Kind, list[tuple[Provider, float, Future]]] = {}

        for kind in ALL_KINDS:
            if kind not in policy.kinds:
                continue
            providers = self.providers_for(kind)
            short = self._shortcut(kind, target, providers, now)
            if short is not None:
                entries[kind] = short
                continue
            remote = [p for p in providers if not p.local]
            key = EnrichmentCache.key(target.id, kind, target.list_id if kind == Kind.CLICK_COUNT else None)
            cached = self.cache.get(key) if remote else None
            if cached is not None and (
                policy.mode == "cache_only"
                or (policy.mode == "cached" and now - cached.fetched_at < policy.ttl_for(kind))
            ):
                entries[kind] = cached
                continue
            if policy.mode == "cache_only" and remote:
                providers = [p for p in providers if p.local]
            if not providers:
                failures[kind] = "no provider"
                continue
            started = time.monotonic()
            pending[kind] = [(p, started + p.timeout, self._pool.submit(p, kind, target)) for p in providers]

        for kind, calls in pending.items():
            answers: list[tuple[Provider, Any]] = []
            errors: list[str] = []
            for provider, deadline, fut in calls:
                try:
                    answers.append((provider, fut.result(timeout=max(0.0, deadline - time.monotonic()))))
                except FutureTimeout:
                    errors.append(f"{provider.name}: timed out")
                except ProviderFailure as exc:
                    errors.append(str(exc))
                except Exception as exc:  # noqa: BLE001 - a broken provider is a failed provider
                    errors.append(f"{provider.name}: {type(exc).__name__}: {exc}")
            try:
                value, source = self._combine(kind, answers, target, policy, now)
            except (ProviderFailure, ValueError, TypeError) as exc:
                errors.append(str(exc))
                value = source = None
            if source is None:
                failures[kind] = "; ".join(errors) or "no answer"
                key = EnrichmentCache.key(target.id, kind, target.list_id if kind == Kind.CLICK_COUNT else None)
                stale = self.cache.get(key)
                if stale is not None and policy.mode != "on_the_fly":
                    entries[kind] = stale  # old value with its old timestamp
                continue
            if errors:
                logger.info("partial answers for %s/%s: %s", target.id, kind.value, "; ".join(errors))
            entry = EnrichmentEntry(kind, value, source, now)
            entries[kind] = entry
            refreshed.add(kind)
            if any(not p.local for p, _ in answers):
                self.cache.put(EnrichmentCache.key(target.id, kind,
                                                   target.list_id if kind == Kind.CLICK_COUNT else None), entry)

        return EnrichmentOutcome(EnrichmentReport(now, entries), failures, refreshed)

    def _shortcut(self, kind, target, providers, now) -> Optional[EnrichmentEntry]:
        """Answers that need no provider round trip."""
        if kind == Kind.DISCOVERED_LINK and target.url:
            return EnrichmentEntry(kind, target.url, "citation", now)
        if kind == Kind.RETRACTION:
            # a local retraction flag wins over any cached remote answer
            for p in providers:
                if p.local:
                    try:
                        if p(kind, target):
                            return EnrichmentEntry(kind, True, p.name, now)
                    except ProviderFailure:
                        pass
        return None

    def _combine(self, kind: Kind, answers: list[tuple[Provider, Any]], target: Target,
                 policy: EnrichmentPolicy, now: datetime) -> tuple[Any, Optional[str]]:
        if not answers:
            return None, None
        names = ",".join(p.name for p, _ in answers)
        if kind == Kind.CITATION_COUNT:
            return {p.name: _count(v, p.name) for p, v in answers}, names
        if kind == Kind.BOOKMARK_COUNT:
            return sum(_count(v, p.name) for p, v in answers), names
        if kind == Kind.TRANSLATIONS:
            found: list[str] = []
            for _, v in answers:
                found += list(v or [])
            return list(dict.fromkeys(found)), names
        if kind == Kind.RETRACTION:
            return any(bool(v) for _, v in answers), names
        provider, value = answers[0]
        if kind == Kind.LINK_STATUS:
            return LinkStatus.from_dict(value).to_dict(), provider.name
        if kind == Kind.DISCOVERED_LINK:
            if value is not None:
                check_url(value)
            return value, provider.name
        if kind == Kind.OPEN_ACCESS:
            return _access_mode(value, now).to_dict(), provider.name
        if kind == Kind.VISIT_COUNTS:
            counts = VisitCounts(value["total"], value["last_30_days"])
            return counts.to_dict(), provider.name
        if kind == Kind.CLICK_COUNT:
            return _count(value, provider.name), provider.name
        if kind == Kind.RECENT_REVIEW:
            return is_recent(_review_dates(value), now.date(), policy.review_window_days), provider.name
        raise ValueError(f"unhandled kind {kind}")

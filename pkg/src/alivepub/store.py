"""File-backed record store, the DOI-style indirection table and the mirror.

On-disk layout (see STORAGE.md)::

    <root>/<namespace>.log     one append-only log per record type
    <root>/blobs/<sha256>      revision bodies, content addressed

Each log starts with the magic line ``ALIVE-STORE/1 <namespace>`` followed
by one record per line: ``<crc32 hex> <json>``.  The JSON object is either
``{"k": key, "v": value}`` or the tombstone ``{"d": true, "k": key}``.  The
last line for a key wins.  A final line without a newline is a torn write
from a crash and is discarded on open; a complete line whose checksum does
not match raises CorruptionError.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import zlib
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Optional
from urllib.parse import quote, urlsplit

from .errors import CorruptionError, InvalidURL, MirrorError, NotFound, StorageError
from .model import content_hash, format_instant, parse_instant, utcnow

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = "ALIVE-STORE"
_NS_RE = re.compile(r"^[a-z][a-z0-9_]*$")


def encode_record(key: str, value: Any = None, *, deleted: bool = False) -> bytes:
    obj = {"d": True, "k": key} if deleted else {"k": key, "v": value}
    payload = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    data = payload.encode("utf-8")
    return b"%08x " % zlib.crc32(data) + data + b"\n"


def decode_record(line: bytes) -> tuple[str, Any, bool]:
    """Decode one complete log line (with or without its newline)."""
    line = line.rstrip(b"\n")
    if len(line) < 10 or line[8:9] != b" ":
        raise CorruptionError("malformed record line")
    try:
        crc = int(line[:8], 16)
    except ValueError:
        raise CorruptionError("malformed record checksum") from None
    data = line[9:]
    if zlib.crc32(data) != crc:
        raise CorruptionError("record checksum mismatch")
    try:
        obj = json.loads(data.decode("utf-8"))
        return obj["k"], obj.get("v"), bool(obj.get("d", False))
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptionError(f"undecodable record: {exc}") from None


class RecordStore:
    """Namespaced key/value store with read-your-writes and crash-safe appends.

    ``root=None`` keeps everything in memory (used by tests and simulations).
    """

    def __init__(self, root: Optional[os.PathLike | str] = None, *, durable: bool = True):
        self.root = Path(root) if root is not None else None
        self.durable = durable
        self._lock = threading.RLock()
        self._data: dict[str, dict[str, str]] = {}
        self._dead: dict[str, int] = {}
        self._blobs: dict[str, bytes] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            (self.root / "blobs").mkdir(exist_ok=True)
            for path in sorted(self.root.glob("*.log")):
                self._load(path.stem)

    # -- log files --------------------------------------------------------

    def _path(self, ns: str) -> Path:
        return self.root / f"{ns}.log"

    def _header(self, ns: str) -> bytes:
        return f"{MAGIC}/{FORMAT_VERSION} {ns}\n".encode()

    def _load(self, ns: str) -> None:
        path = self._path(ns)
        raw = path.read_bytes()
        header = self._header(ns)
        if not raw.startswith(header):
            if header.startswith(raw):
                # crashed while creating the file
                path.write_bytes(header)
                raw = header
            else:
                raise CorruptionError(f"{path}: bad magic header")
        table: dict[str, str] = {}
        dead = 0
        offset = len(header)
        good_end = offset
        while offset < len(raw):
            nl = raw.find(b"\n", offset)
            if nl < 0:
                logger.warning("%s: discarding torn record at offset %d", path, offset)
                break
            try:
                key, value, deleted = decode_record(raw[offset:nl])
            except CorruptionError as exc:
                raise CorruptionError(f"{path}: {exc} at offset {offset}") from None
            if key in table:
                dead += 1
            if deleted:
                table.pop(key, None)
                dead += 1
            else:
                table[key] = _canonical(value)
            offset = good_end = nl + 1
        if good_end < len(raw):
            with open(path, "r+b") as f:
                f.truncate(good_end)
        self._data[ns] = table
        self._dead[ns] = dead

    def _append(self, ns: str, line: bytes) -> None:
        if self.root is None:
            return
        path = self._path(ns)
        new = not path.exists()
        try:
            with open(path, "ab") as f:
                if new:
                    f.write(self._header(ns))
                f.write(line)
                f.flush()
                if self.durable:
                    os.fsync(f.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to {path}: {exc}") from exc

    def _table(self, ns: str) -> dict[str, str]:
        if not _NS_RE.match(ns):
            raise ValueError(f"bad namespace {ns!r}")
        return self._data.setdefault(ns, {})

    # -- records ----------------------------------------------------------

    def put(self, ns: str, key: str, value: Any) -> None:
        text = _canonical(value)
        with self._lock:
            table = self._table(ns)
            self._append(ns, encode_record(key, json.loads(text)))
            if key in table:
                self._dead[ns] = self._dead.get(ns, 0) + 1
            table[key] = text
            self._maybe_compact(ns)

    def get(self, ns: str, key: str) -> Any:
        with self._lock:
            try:
                text = self._table(ns)[key]
            except KeyError:
                raise NotFound(f"{ns}/{key}") from None
        return json.loads(text)

    def find(self, ns: str, key: str, default: Any = None) -> Any:
        try:
            return self.get(ns, key)
        except NotFound:
            return default

    def delete(self, ns: str, key: str) -> None:
        with self._lock:
            table = self._table(ns)
            if key not in table:
                raise NotFound(f"{ns}/{key}")
            self._append(ns, encode_record(key, deleted=True))
            del table[key]
            self._dead[ns] = self._dead.get(ns, 0) + 2

    def keys(self, ns: str) -> list[str]:
        with self._lock:
            return sorted(self._table(ns))

    def list(self, ns: str) -> dict[str, Any]:
        with self._lock:
            items = list(self._table(ns).items())
        return {k: json.loads(v) for k, v in sorted(items)}

    def snapshot(self, *namespaces: str) -> dict[str, dict[str, Any]]:
        """Consistent read of several namespaces at once."""
        with self._lock:
            frozen = {ns: dict(self._table(ns)) for ns in namespaces}
        return {ns: {k: json.loads(v) for k, v in sorted(t.items())} for ns, t in frozen.items()}

    def transaction(self):
        """Hold the writer lock across several operations."""
        return self._lock

    # -- compaction -------------------------------------------------------

    def _maybe_compact(self, ns: str) -> None:
        dead = self._dead.get(ns, 0)
        if self.root is not None and dead > 1000 and dead > len(self._data[ns]):
            self.compact(ns)

    def compact(self, ns: str) -> None:
        if self.root is None:
            return
        with self._lock:
            table = self._table(ns)
            path = self._path(ns)
            tmp = path.with_suffix(".log.tmp")
            with open(tmp, "wb") as f:
                f.write(self._header(ns))
                for key in sorted(table):
                    f.write(encode_record(key, json.loads(table[key])))
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
            self._dead[ns] = 0

    # -- blobs ------------------------------------------------------------

    def put_blob(self, body: bytes) -> str:
        digest = content_hash(body)
        with self._lock:
            if self.root is None:
                self._blobs[digest] = bytes(body)
            else:
                path = self.root / "blobs" / digest
                if not path.exists():
                    atomic_write(path, body, durable=self.durable)
        return digest

    def get_blob(self, digest: str) -> bytes:
        if self.root is None:
            try:
                return self._blobs[digest]
            except KeyError:
                raise NotFound(f"blob {digest}") from None
        path = self.root / "blobs" / digest
        try:
            body = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"blob {digest}") from None
        if content_hash(body) != digest:
            raise CorruptionError(f"blob {digest} does not match its hash")
        return body


def _canonical(value: Any) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def atomic_write(path: Path, data: bytes, *, durable: bool = True) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            if durable:
                os.fsync(f.fileno())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def check_url(url: str) -> str:
    if not isinstance(url, str):
        raise InvalidURL(f"not a URL: {url!r}")
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc or any(c.isspace() for c in url):
        raise InvalidURL(f"not an absolute http(s) URL: {url!r}")
    return url


# -- indirection table -----------------------------------------------------


@dataclass
class IndirectionEntry:
    id: str
    current_url: str
    remap_history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.id, "current_url": self.current_url, "remap_history": self.remap_history}

    @classmethod
    def from_dict(cls, d: dict) -> "IndirectionEntry":
        return cls(d["id"], d["current_url"], list(d["remap_history"]))


class IndirectionTable:
    """Maps stable publication ids to their current location.

    Citing documents hold ids; moving a publication is one ``remap`` here.
    """

    NS = "indirection"

    def __init__(self, store: RecordStore, clock: Callable[[], datetime] = utcnow):
        self.store = store
        self.clock = clock

    def put(self, pub_id: str, url: str, at: Optional[datetime] = None) -> IndirectionEntry:
        check_url(url)
        entry = IndirectionEntry(pub_id, url, [{"url": url, "changed_at": format_instant(at or self.clock())}])
        self.store.put(self.NS, pub_id, entry.to_dict())
        return entry

    def get(self, pub_id: str) -> IndirectionEntry:
        return IndirectionEntry.from_dict(self.store.get(self.NS, pub_id))

    def resolve_id(self, pub_id: str) -> str:
        return self.get(pub_id).current_url

    def remap(self, pub_id: str, new_url: str, at: Optional[datetime] = None) -> IndirectionEntry:
        check_url(new_url)
        with self.store.transaction():
            entry = self.get(pub_id)
            at = at or self.clock()
            last = parse_instant(entry.remap_history[-1]["changed_at"])
            # history stays ordered even if the clock steps back
            stamp = max(at, last)
            entry.remap_history.append({"url": new_url, "changed_at": format_instant(stamp)})
            entry.current_url = new_url
            self.store.put(self.NS, pub_id, entry.to_dict())
        return entry


# -- mirror ----------------------------------------------------------------


@dataclass
class MirrorState:
    id: str
    mirrored_version: int
    mirrored_hash: str
    synced_at: datetime
    pending: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "mirrored_version": self.mirrored_version,
            "mirrored_hash": self.mirrored_hash,
            "synced_at": format_instant(self.synced_at),
            "pending": self.pending,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MirrorState":
        return cls(d["id"], d["mirrored_version"], d["mirrored_hash"], parse_instant(d["synced_at"]), d["pending"])


class MemoryMirror:
    """In-process mirror target; ``fail_next`` injects write failures."""

    def __init__(self):
        self.bodies: dict[str, bytes] = {}
        self.fail_next = 0

    def write(self, pub_id: str, body: bytes) -> None:
        if self.fail_next:
            self.fail_next -= 1
            raise MirrorError(f"mirror unreachable for {pub_id}")
        self.bodies[pub_id] = bytes(body)

    def read(self, pub_id: str) -> bytes:
        try:
            return self.bodies[pub_id]
        except KeyError:
            raise NotFound(pub_id) from None


class DirectoryMirror:
    """Mirror copy kept in a second directory, replaced atomically per write."""

    def __init__(self, root: os.PathLike | str, durable: bool = True):
        self.root = Path(root)
        self.durable = durable

    def _path(self, pub_id: str) -> Path:
        name = quote(pub_id, safe="")
        if name.startswith("."):
            name = "%2E" + name[1:]
        return self.root / name

    def write(self, pub_id: str, body: bytes) -> None:
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            atomic_write(self._path(pub_id), body, durable=self.durable)
        except OSError as exc:
            raise MirrorError(f"cannot write mirror copy of {pub_id}: {exc}") from exc

    def read(self, pub_id: str) -> bytes:
        try:
            return self._path(pub_id).read_bytes()
        except FileNotFoundError:
            raise NotFound(pub_id) from None


class MirrorSync:
    """Keeps a mirror copy of each publication's latest body.

    A failed write leaves the previous mirror copy intact and sets the
    durable ``pending`` flag; ``retry_pending`` drains it.
    """

    NS = "mirror"

    def __init__(self, store: RecordStore, target, latest: Callable[[str], tuple[int, str]],
                 clock: Callable[[], datetime] = utcnow):
        self.store = store
        self.target = target
        self.latest = latest  # pub_id -> (version, content_hash)
        self.clock = clock

    def state(self, pub_id: str) -> Optional[MirrorState]:
        d = self.store.find(self.NS, pub_id)
        return MirrorState.from_dict(d) if d else None

    def mirror_sync(self, pub_id: str) -> MirrorState:
        version, digest = self.latest(pub_id)
        now = self.clock()
        prev = self.state(pub_id)
        if prev is not None and prev.mirrored_hash == digest and not prev.pending:
            prev.synced_at = now
            self.store.put(self.NS, pub_id, prev.to_dict())
            return prev
        body = self.store.get_blob(digest)
        try:
            self.target.write(pub_id, body)
        except MirrorError:
            pending = prev or MirrorState(pub_id, 0, "", now)
            pending.pending = True
            self.store.put(self.NS, pub_id, pending.to_dict())
            raise
        state = MirrorState(pub_id, version, digest, now)
        self.store.put(self.NS, pub_id, state.to_dict())
        return state

    def pending(self) -> list[str]:
        return [k for k, v in self.store.list(self.NS).items() if v["pending"]]

    def retry_pending(self, ids: Optional[Iterable[str]] = None) -> dict[str, bool]:
        results = {}
        for pub_id in list(ids) if ids is not None else self.pending():
            try:
                self.mirror_sync(pub_id)
                results[pub_id] = True
            except MirrorError as exc:
                logger.warning("mirror retry failed for %s: %s", pub_id, exc)
                results[pub_id] = False
        return results


# -- usage counters --------------------------------------------------------


class UsageCounters:
    """Raw visit and click counts, bucketed per UTC day.

    No robot filtering is attempted.
    """

    NS = "counters"

    def __init__(self, store: RecordStore, clock: Callable[[], datetime] = utcnow):
        self.store = store
        self.clock = clock

    def _bump(self, key: str, at: Optional[datetime]) -> None:
        day = (at or self.clock()).date().isoformat()
        with self.store.transaction():
            rec = self.store.find(self.NS, key) or {"days": {}}
            rec["days"][day] = rec["days"].get(day, 0) + 1
            self.store.put(self.NS, key, rec)

    def _window(self, key: str, now: Optional[datetime], days: int) -> tuple[int, int]:
        rec = self.store.find(self.NS, key) or {"days": {}}
        today = (now or self.clock()).date()
        total = recent = 0
        for day, n in rec["days"].items():
            total += n
            age = (today - date.fromisoformat(day)).days
            if 0 <= age < days:
                recent += n
        return total, recent

    def record_visit(self, pub_id: str, at: Optional[datetime] = None) -> None:
        self._bump(f"visit:{pub_id}", at)

    def record_click(self, list_id: str, pub_id: str, at: Optional[datetime] = None) -> None:
        self._bump(f"click:{list_id}:{pub_id}", at)

    def visits(self, pub_id: str, now: Optional[datetime] = None, days: int = 30) -> tuple[int, int]:
        """(total, within the last ``days`` days including today)"""
        return self._window(f"visit:{pub_id}", now, days)

    def clicks(self, list_id: str, pub_id: str, now: Optional[datetime] = None, days: int = 30) -> tuple[int, int]:
        return self._window(f"click:{list_id}:{pub_id}", now, days)

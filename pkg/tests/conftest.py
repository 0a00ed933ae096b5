import threading
import time
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from alivepub.ledger import VersionLedger
from alivepub.store import RecordStore

REVISION_STAMPS = [
    "2017-10-05T19:18:51Z",
    "2017-10-11T16:26:26Z",
    "2017-11-07T22:45:22Z",
    "2019-10-08T13:29:33Z",
]
ARXIV_ID = "1710.02185"


class Clock:
    """Settable UTC clock."""

    def __init__(self, start="2024-01-01T00:00:00Z"):
        self.now = datetime.fromisoformat(start.replace("Z", "+00:00"))

    def __call__(self):
        return self.now

    def advance(self, **kw):
        self.now += timedelta(**kw)
        return self.now

    def set(self, when):
        self.now = datetime.fromisoformat(when.replace("Z", "+00:00")) if isinstance(when, str) else when


def instant(text):
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


@pytest.fixture
def clock():
    return Clock()


@pytest.fixture
def store():
    return RecordStore()


def seed_four_revisions(ledger, pub_id=ARXIV_ID):
    return [
        ledger.publish_revision(pub_id, f"body of revision {i + 1}".encode(), f"rev {i + 1}", at=instant(s))
        for i, s in enumerate(REVISION_STAMPS)
    ]


@pytest.fixture
def four_revisions(store, clock):
    ledger = VersionLedger(store, clock)
    seed_four_revisions(ledger)
    return ledger


# -- local HTTP fixture ------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    hits: dict = {}

    def log_message(self, *args):
        pass

    def _send(self, code, body=b"", headers=()):
        self.send_response(code)
        for k, v in headers:
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_GET(self):
        path = self.path.split("?")[0]
        self.hits[path] = self.hits.get(path, 0) + 1
        if path == "/ok":
            self._send(200, b"hello")
        elif path == "/moved":
            self._send(301, headers=[("Location", "/ok")])
        elif path == "/chain":
            self._send(302, headers=[("Location", "/moved")])
        elif path == "/moved-to-gone":
            self._send(301, headers=[("Location", "/gone")])
        elif path == "/loop":
            self._send(301, headers=[("Location", "/loop")])
        elif path == "/gone":
            self._send(404, b"not here")
        elif path == "/error":
            self._send(500)
        elif path == "/slow":
            time.sleep(2.0)
            self._send(200, b"late")
        elif path.startswith("/api/citation_count/"):
            if self.headers.get("If-None-Match") == '"v1"':
                self._send(304, headers=[("ETag", '"v1"')])
            else:
                self._send(200, b'{"value": 7}', [("ETag", '"v1"'), ("Content-Type", "application/json")])
        elif path.startswith("/api/open_access/"):
            self._send(200, b'{"value": {"mode": "open"}}', [("Content-Type", "application/json")])
        elif path.startswith("/api/"):
            self._send(404)
        else:
            self._send(404)


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address):
        pass  # clients that gave up on /slow


@pytest.fixture(scope="session")
def http_fixture():
    server = _Server(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, _Handler.hits
    server.shutdown()
    server.server_close()


# -- acceptance report ---------------------------------------------------------------

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    setattr(item, f"rep_{report.when}", report)
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        _criteria[number] = (title, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict, duration = _criteria[number]
        terminalreporter.write_line(f"{verdict} criterion {number:>2}: {title} ({duration:.2f} s)")

import threading
from datetime import date

import pytest

from alivepub.enrich import FixtureProvider
from alivepub.errors import NotFound
from alivepub.model import Kind, MetaAttributes, Style
from alivepub.registry import RefreshPolicy, Registry
from alivepub.store import MemoryMirror, RecordStore

from conftest import instant

META = MetaAttributes("Duty", ("A. N. Author",), language="ru")


def test_refresh_policy():
    assert RefreshPolicy().mode == "on_the_fly"
    with pytest.raises(ValueError):
        RefreshPolicy("nightly", ttl_hours=12)
    with pytest.raises(ValueError):
        RefreshPolicy("hourly")
    p = RefreshPolicy("nightly")
    assert p.next_run(instant("2024-01-01T02:00:00Z")) == instant("2024-01-01T03:00:00Z")
    assert p.next_run(instant("2024-01-01T03:00:00Z")) == instant("2024-01-02T03:00:00Z")


def test_publish_mirrors_and_remaps(clock):
    mirror = MemoryMirror()
    reg = Registry(RecordStore(), mirror_target=mirror, clock=clock)
    reg.publish("duty", b"one", meta=META, url="https://old.example/duty")
    assert mirror.read("duty") == b"one"
    reg.publish("duty", b"two", url="https://new.example/duty")
    assert reg.current_url("duty") == "https://new.example/duty"
    assert [h["url"] for h in reg.indirection.get("duty").remap_history] == \
        ["https://old.example/duty", "https://new.example/duty"]
    mirror.fail_next = 1
    reg.publish("duty", b"three")
    assert mirror.read("duty") == b"two"
    assert reg.mirror.pending() == ["duty"]
    reg.mirror.retry_pending()
    assert mirror.read("duty") == b"three"
    assert reg.mirror.state("duty").mirrored_hash == reg.ledger.latest("duty").content_hash


def test_open_on_disk(tmp_path, clock):
    reg = Registry.open(tmp_path / "store", tmp_path / "mirror", clock=clock)
    reg.publish("duty", b"body", meta=META)
    reg.close()
    again = Registry.open(tmp_path / "store", clock=clock)
    assert again.ledger.body("duty", 1) == b"body"
    assert (tmp_path / "mirror" / "duty").read_bytes() == b"body"


def test_render_uses_indirection_and_counters(clock):
    reg = Registry(RecordStore(), clock=clock)
    reg.publish("duty", b"x", meta=META, url="https://old.example/duty")
    reg.usage.record_visit("duty")
    reg.usage.record_click("L", "duty")
    rendered, report = reg.render("duty", Style.VANCOUVER, list_id="L")
    assert "<https://old.example/duty>" in rendered.plain_text
    assert report.get(Kind.VISIT_COUNTS).value == {"total": 1, "last_30_days": 1}
    assert report.get(Kind.CLICK_COUNT).value == 1
    assert report.get(Kind.RETRACTION).value is False
    with pytest.raises(NotFound):
        reg.render("nosuch")


def test_cited_by_uses_registry_meta(clock):
    reg = Registry(RecordStore(), clock=clock)
    reg.publish("duty", b"x", meta=META)
    reg.publish("citing", b"y", meta=MetaAttributes("Citing paper", ("A. Author",)))
    reg.notifier.register_backlink("citing", "duty", date(2024, 1, 1))
    reg.notifier.register_backlink("offsite", "duty", date(2023, 1, 1),
                                   citing_meta=MetaAttributes("Offsite", ("B",)))
    out = reg.cited_by("duty")
    assert out[0].plain_text.startswith("A. Author, Citing paper.")
    assert out[1].plain_text.startswith("B, Offsite.")


def test_nightly_refresh_counts_and_keeps_failures(clock):
    calls = []
    answers = {Kind.CITATION_COUNT: lambda t: calls.append(t.id) or 5}
    provider = FixtureProvider("index", answers)
    reg = Registry(RecordStore(), providers=[provider], clock=clock, refresh=RefreshPolicy("nightly"))
    ids = [f"p{i}" for i in range(10)]
    for pid in ids:
        reg.publish(pid, b"x", meta=META)
    first = reg.run_nightly_refresh()
    assert (first.refreshed, first.failed, first.fresh) == (10, 0, 0)
    # age four cache entries past the TTL
    clock.advance(hours=12)
    for pid in ids[:4]:
        key = f"{pid}|citation_count|"
        entry = reg.enricher.cache.get(key)
        reg.enricher.cache.put(key, type(entry)(entry.kind, entry.value, entry.source,
                                                entry.fetched_at.replace(year=2000)))
    second = reg.run_nightly_refresh()
    assert (second.refreshed, second.fresh) == (4, 6)
    assert reg.run_nightly_refresh().refreshed == 0
    provider.down = True
    clock.advance(days=2)
    third = reg.run_nightly_refresh()
    assert third.failed == 10 and third.refreshed == 0
    # nightly mode serves the last good value without calling out
    before = provider.calls
    _, report = reg.render("p0", kinds=[Kind.CITATION_COUNT])
    assert report.get(Kind.CITATION_COUNT).value == {"index": 5}
    assert provider.calls == before


def test_concurrent_publishes_stay_gapless(clock):
    reg = Registry(RecordStore(), mirror_target=MemoryMirror(), clock=clock)
    reg.publish("p", b"seed")

    def work(n):
        for i in range(20):
            reg.publish("p", f"{n}-{i}".encode())

    threads = [threading.Thread(target=work, args=(n,)) for n in range(5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    versions = [r.version for r in reg.ledger.revisions("p")]
    assert versions == list(range(1, 102))
    assert reg.mirror.state("p").mirrored_hash == reg.ledger.latest("p").content_hash


def test_nightly_refresh_retries_mirror(clock):
    mirror = MemoryMirror()
    reg = Registry(RecordStore(), mirror_target=mirror, clock=clock)
    mirror.fail_next = 1
    reg.publish("duty", b"one", meta=META)
    assert reg.mirror.pending() == ["duty"]
    reg.run_nightly_refresh()
    assert reg.mirror.pending() == [] and mirror.read("duty") == b"one"

"""Acceptance suite: one test per primary criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""

import random
import time
from datetime import date, timedelta

import pytest
from hypothesis import given, settings

from alivepub.enrich import EnrichmentPolicy, Enricher, FixtureProvider, check_link, check_recent_review
from alivepub.errors import NoOfficialVersion, RateLimited, UnknownVersion
from alivepub.ledger import PromotionPolicy, VersionLedger
from alivepub.marker import embed_meta, extract_meta, refresh_living_dates, scan_living_dates
from alivepub.model import Kind, LivingReference, ResolvePolicy, Style, Track, format_versioned_name, \
    parse_versioned_name
from alivepub.notify import StalenessNotifier
from alivepub.registry import Registry
from alivepub.render import render_reference
from alivepub.store import MemoryMirror, RecordStore, decode_record, encode_record

from conftest import ARXIV_ID, REVISION_STAMPS, Clock, instant, seed_four_revisions
from strategies import json_values, meta_attributes, versioned_names
from test_render import DUTY, GOLDEN, full_report

criterion = pytest.mark.criterion


@pytest.fixture(autouse=True)
def _verdict(request, capsys):
    """Echo a PASS/FAIL line for the running criterion."""
    yield
    mark = request.node.get_closest_marker("criterion")
    rep = getattr(request.node, "rep_call", None)
    if mark and rep is not None:
        with capsys.disabled():
            print(f"\n{'PASS' if rep.passed else 'FAIL'} criterion {mark.args[0]}: {mark.args[1]}")


def _mask(text, spans):
    out, last = [], 0
    for a, b in sorted(spans):
        out.append(text[last:a])
        last = b
    out.append(text[last:])
    return out


@criterion(1, "four-revision replay resolves and dates every version")
def test_c01_four_revision_replay():
    start = time.monotonic()
    ledger = VersionLedger(RecordStore(), Clock())
    seed_four_revisions(ledger)
    assert ledger.resolve(ARXIV_ID).version == 4
    for n, stamp in enumerate(REVISION_STAMPS, 1):
        rec = ledger.resolve(f"{ARXIV_ID}v{n}")
        assert rec.version == n and rec.timestamp == instant(stamp)
    assert ledger.meta(ARXIV_ID).last_revision_date == date(2019, 10, 8)
    assert ledger.meta(ARXIV_ID).first_online_year == 2017
    assert time.monotonic() - start < 1.0


@criterion(2, "an older pinned version reports a newer one")
def test_c02_snapshot_sees_newer():
    start = time.monotonic()
    ledger = VersionLedger(RecordStore(), Clock())
    seed_four_revisions(ledger)
    status = ledger.check_for_updates(f"{ARXIV_ID}v3")
    assert status.newer_exists
    assert str(status.latest) == f"{ARXIV_ID}v4"
    assert status.latest_timestamp == instant(REVISION_STAMPS[3])
    assert not ledger.check_for_updates(f"{ARXIV_ID}v4").newer_exists
    assert time.monotonic() - start < 1.0


@criterion(3, "marker scan and refresh leave all other bytes alone")
def test_c03_marker_refresh():
    quoted = "Last updated ≈2021-03-18≈"
    harvard = "(Gorbunov-Posadov, 2007, ≈2021-03-18≈)"
    for text in (quoted, harvard):
        [m] = scan_living_dates(text)
        assert m.date == date(2021, 3, 18)
        out = refresh_living_dates(text, {0: "duty"}, {"duty": date(2022, 1, 5)}.__getitem__)
        [n] = scan_living_dates(out)
        assert n.date == date(2022, 1, 5)
        assert _mask(text, [m.span]) == _mask(out, [n.span])
        assert refresh_living_dates(out, {0: "duty"}, {"duty": date(2022, 1, 5)}.__getitem__) == out


def _stale_oracle(revision_dates, recorded, acked):
    if not revision_dates:
        return False
    seen = recorded if acked is None else max(recorded, acked)
    return max(revision_dates) > seen


@criterion(4, "staleness matches a brute-force oracle over random histories")
def test_c04_staleness_oracle():
    start = time.monotonic()
    rng = random.Random(20240101)
    pubs = [f"p{i}" for i in range(5)]
    docs = ["d0", "d1", "d2"]
    for _ in range(1000):
        clock = Clock("2020-01-01T00:00:00Z")
        store = RecordStore()
        ledger = VersionLedger(store, clock)
        notifier = StalenessNotifier(store, ledger, clock)
        ledger.listeners.append(lambda pid, rec: notifier.on_revision(pid, rec.date, rec.version))
        dates = {p: [] for p in pubs}
        links = {}  # (doc, target) -> [recorded, acked]
        expected_notes = {d: [] for d in docs}
        for p in pubs:
            ledger.publish_revision(p, b"0")
            dates[p].append(clock().date())
        for _ in range(rng.randint(5, 25)):
            clock.advance(hours=rng.choice([0, 3, 24, 24 * 10]))
            op = rng.random()
            if op < 0.4:
                p = rng.choice(pubs)
                before = {k: _stale_oracle(dates[k[1]], *v) for k, v in links.items()}
                rec = ledger.publish_revision(p, b"x")
                dates[p].append(clock().date())
                for (d, t), v in links.items():
                    if t == p and not before[(d, t)] and _stale_oracle(dates[t], *v):
                        expected_notes[d].append((t, rec.version))
            elif op < 0.75:
                d, t = rng.choice(docs), rng.choice(pubs)
                recorded = clock().date() - timedelta(days=rng.randint(-2, 40))
                notifier.register_backlink(d, t, recorded)
                links[(d, t)] = [recorded, None]
            elif links:
                d, t = rng.choice(sorted(links))
                notifier.acknowledge(d, t)
                links[(d, t)][1] = clock().date()
            for (d, t), (recorded, acked) in links.items():
                assert notifier.get(d, t).stale == _stale_oracle(dates[t], recorded, acked)
        for d in docs:
            assert [(n.target, n.new_version) for n in notifier.outbox(d)] == expected_notes[d]
    assert time.monotonic() - start < 30.0


@criterion(5, "resolve matches an oracle on random ledgers of up to 50 versions")
def test_c05_resolve_oracle():
    start = time.monotonic()
    rng = random.Random(5)
    for i in range(200):
        ledger = VersionLedger(RecordStore(), Clock())
        tracks = [rng.choice(list(Track)) for _ in range(rng.randint(1, 50))]
        for t in tracks:
            ledger.publish_revision("p", b"b", track=t)
        assert ledger.resolve("p").version == len(tracks)
        official = [n for n, t in enumerate(tracks, 1) if t == Track.OFFICIAL]
        if official:
            assert ledger.resolve("p", ResolvePolicy.LATEST_OFFICIAL).version == max(official)
        else:
            with pytest.raises(NoOfficialVersion):
                ledger.resolve("p", ResolvePolicy.LATEST_OFFICIAL)
        for n in rng.sample(range(1, len(tracks) + 3), min(5, len(tracks) + 2)):
            if n <= len(tracks):
                assert ledger.resolve(f"pv{n}").version == n
            else:
                with pytest.raises(UnknownVersion):
                    ledger.resolve(f"pv{n}")
    assert time.monotonic() - start < 10.0


def _providers(down):
    answers = {
        Kind.LINK_STATUS: {"p": {"state": "ok", "final_url": None, "http_code": 200}},
        Kind.RETRACTION: {"p": False},
        Kind.OPEN_ACCESS: {"p": {"mode": "open"}},
        Kind.CITATION_COUNT: {"p": 4},
        Kind.BOOKMARK_COUNT: {"p": 1},
        Kind.TRANSLATIONS: {"p": []},
        Kind.RECENT_REVIEW: {"p": []},
        Kind.DISCOVERED_LINK: {"p": "https://found.example/p"},
        Kind.VISIT_COUNTS: {"p": {"total": 3, "last_30_days": 1}},
        Kind.CLICK_COUNT: {"p": 2},
    }
    return [FixtureProvider(f"fx-{k.value}", {k: v}, down=k in down) for k, v in answers.items()]


@criterion(6, "failed providers drop exactly their kinds; cached reads stay local")
def test_c06_fault_masks_and_cache():
    rng = random.Random(6)
    ref = LivingReference("p", date(2024, 1, 1), "citing")
    kinds = sorted(Kind, key=lambda k: k.value)
    for _ in range(100):
        down = {k for k in kinds if rng.random() < 0.3}
        clock = Clock()
        e = Enricher(_providers(down), clock=clock)
        report = e.enrich(ref, EnrichmentPolicy())
        assert set(Kind) - set(report.entries) == down
        e.close()

        e = Enricher(_providers(()), clock=clock)
        policy = EnrichmentPolicy(mode="cached")
        first = e.enrich(ref, policy)
        calls = e.outbound_calls()
        clock.advance(hours=rng.randint(0, 23))
        assert e.enrich(ref, policy).entries == first.entries
        assert e.outbound_calls() == calls
        e.close()


@criterion(7, "link checker classifies ok, redirect, broken and timeout")
def test_c07_link_checker(http_fixture):
    base, _ = http_fixture
    ok = check_link(base + "/ok", timeout=3)
    assert (ok.state, ok.http_code) == ("ok", 200)
    moved = check_link(base + "/moved", timeout=3)
    assert (moved.state, moved.http_code, moved.final_url) == ("redirect", 301, base + "/ok")
    gone = check_link(base + "/gone", timeout=3)
    assert (gone.state, gone.http_code) == ("broken", 404)
    assert check_link(base + "/slow", timeout=0.3).state == "timeout"


@criterion(8, "a remapped URL changes only the URL field of a rendering")
def test_c08_remap_changes_only_url():
    old, new = DUTY.url, "https://mirror.example.org/duty.htm"
    golden = (GOLDEN / "duty_vancouver.txt").read_text(encoding="utf-8")
    moved = render_reference(DUTY.with_changes(url=new), full_report(), Style.VANCOUVER).plain_text
    assert golden.count(old) == 1
    assert moved + "\n" == golden.replace(old, new)

    clock = Clock()
    reg = Registry(RecordStore(), clock=clock)
    reg.publish("duty", b"body", meta=DUTY.with_changes(url=None), url=old)
    before, _ = reg.render("duty", Style.VANCOUVER, kinds={Kind.RETRACTION, Kind.TRANSLATIONS})
    reg.indirection.remap("duty", new)
    after, _ = reg.render("duty", Style.VANCOUVER, kinds={Kind.RETRACTION, Kind.TRANSLATIONS})
    assert before.plain_text != after.plain_text
    assert after.plain_text == before.plain_text.replace(old, new)
    assert after.markup_fragment == before.markup_fragment.replace(old, new)


@criterion(9, "mirror catches up with the latest body despite write faults")
def test_c09_mirror_faults():
    rng = random.Random(9)
    mirror = MemoryMirror()
    clock = Clock()
    reg = Registry(RecordStore(), mirror_target=mirror, clock=clock)
    for i in range(100):
        clock.advance(minutes=5)
        mirror.fail_next = 1 if rng.random() < 0.10 else 0
        pid = f"p{i % 7}"
        reg.publish(pid, f"{pid} body {i}".encode())
        state = reg.mirror.state(pid)
        assert state.pending or state.mirrored_hash == reg.ledger.latest(pid).content_hash
        if rng.random() < 0.5:
            reg.mirror.retry_pending()
    mirror.fail_next = 0
    reg.mirror.retry_pending()
    assert reg.mirror.pending() == []
    for pid in reg.ledger.ids():
        latest = reg.ledger.latest(pid)
        assert reg.mirror.state(pid).mirrored_hash == latest.content_hash
        assert mirror.read(pid) == reg.ledger.body(pid, latest.version)


@criterion(10, "promotion is refused at 89 days and allowed at 91")
def test_c10_promotion_rate_limit():
    ledger = VersionLedger(RecordStore(), Clock())
    for _ in range(3):
        ledger.publish_revision("p", b"x", track=Track.AUTHOR)
    t0 = instant("2024-01-01T00:00:00Z")
    ledger.promote("p", 1, PromotionPolicy(90), at=t0)
    with pytest.raises(RateLimited):
        ledger.promote("p", 2, PromotionPolicy(90), at=t0 + timedelta(days=89))
    assert ledger.promote("p", 2, PromotionPolicy(90), at=t0 + timedelta(days=91)).track == Track.OFFICIAL


@criterion(11, "a review counts as recent inside a 180-day window only")
def test_c11_review_window():
    now = instant("2024-06-01T00:00:00Z")
    provider = FixtureProvider("reviews", {Kind.RECENT_REVIEW: {
        "fresh": [(now - timedelta(days=100)).date().isoformat()],
        "old": [(now - timedelta(days=200)).date().isoformat()],
    }})
    assert check_recent_review("fresh", provider, 180, now) is True
    assert check_recent_review("old", provider, 180, now) is False


RT = settings(max_examples=10_000, deadline=None)


@RT
@given(meta_attributes())
def _meta_round_trip(meta):
    assert extract_meta(embed_meta("<html><head></head><body>≈2021-03-18≈</body></html>", meta)) == meta


@RT
@given(versioned_names)
def _name_round_trip(name):
    assert parse_versioned_name(format_versioned_name(name)) == name


@RT
@given(json_values)
def _record_round_trip(value):
    assert decode_record(encode_record("key", value)) == ("key", value, False)


@criterion(12, "meta, name and record round-trips hold on 10^4 examples each")
def test_c12_round_trips():
    _meta_round_trip()
    _name_round_trip()
    _record_round_trip()
